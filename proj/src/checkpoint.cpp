#include "ayf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include <json.hpp>

#include "ayf/errors.hpp"
#include "ayf/hash.hpp"
#include "ayf/version.hpp"

namespace ayf::checkpoint {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'A', 'Y', 'F', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::string& buf, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) {
    throw IntegrityError("checkpoint is truncated");
  }
  T value;
  std::memcpy(&value, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

void save(const std::filesystem::path& path, const net::MlpFlowMap& model,
          const std::string& config_hash) {
  const auto& spec = model.spec();
  nlohmann::json header = {
      {"dim", spec.dim},
      {"classes", spec.classes},
      {"hidden", spec.hidden},
      {"embed_width", spec.embed_width},
      {"freqs", spec.freqs},
      {"config_hash", config_hash},
      {"tool_version", kVersion},
  };
  const std::string head = header.dump();
  const auto& p = model.params();
  const std::size_t payload = static_cast<std::size_t>(p.size()) * sizeof(double);

  std::string buf(kMagic, sizeof kMagic);
  put<std::uint32_t>(buf, kFormatVersion);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(head.size()));
  buf += head;
  put<std::uint64_t>(buf, static_cast<std::uint64_t>(p.size()));
  buf.append(reinterpret_cast<const char*>(p.data()), payload);
  put<std::uint64_t>(buf, fnv1a_bytes(p.data(), payload, fnv1a(head)));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write checkpoint " + path.string());
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) {
    throw IoError("failed writing checkpoint " + path.string());
  }
}

Loaded load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read checkpoint " + path.string());
  }
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof kMagic || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    throw IntegrityError("not a checkpoint file: " + path.string());
  }
  std::size_t pos = sizeof kMagic;
  const auto version = take<std::uint32_t>(buf, pos);
  if (version != kFormatVersion) {
    throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto head_len = take<std::uint32_t>(buf, pos);
  if (pos + head_len > buf.size()) {
    throw IntegrityError("checkpoint is truncated");
  }
  const std::string head = buf.substr(pos, head_len);
  pos += head_len;
  const auto count = take<std::uint64_t>(buf, pos);
  const std::size_t payload = count * sizeof(double);
  if (count > buf.size() || pos + payload + sizeof(std::uint64_t) != buf.size()) {
    throw IntegrityError("checkpoint payload size mismatch");
  }
  const char* params_at = buf.data() + pos;
  pos += payload;
  const auto checksum = take<std::uint64_t>(buf, pos);
  if (checksum != fnv1a_bytes(params_at, payload, fnv1a(head))) {
    throw IntegrityError("checkpoint checksum mismatch");
  }

  nlohmann::json header;
  net::ModelSpec spec;
  try {
    header = nlohmann::json::parse(head);
    spec.dim = header.at("dim").get<int>();
    spec.classes = header.at("classes").get<int>();
    spec.hidden = header.at("hidden").get<std::vector<int>>();
    spec.embed_width = header.at("embed_width").get<int>();
    spec.freqs = header.at("freqs").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed checkpoint header: ") + e.what());
  }
  net::MlpFlowMap model(spec, 0);
  if (model.num_params() != count) {
    throw IntegrityError("checkpoint parameter count does not match its architecture");
  }
  Eigen::VectorXd p(static_cast<Eigen::Index>(count));
  std::memcpy(p.data(), params_at, payload);
  model.set_params(p);
  return Loaded{std::move(model), header.value("config_hash", ""), header.value("tool_version", "")};
}

}  // namespace ayf::checkpoint
