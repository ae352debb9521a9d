#include "charphish/models.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "charphish/hash.hpp"

namespace charphish {

namespace {

bool known_kind(const std::string& k) {
  return k == "charcnn" || k == "chargru" || k == "charbilstm";
}

}  // namespace

void NetworkSpec::validate() const {
  if (!known_kind(kind)) throw std::invalid_argument("unknown model kind: " + kind);
  if (t_max < 1) throw std::invalid_argument("t_max must be >= 1");
  if (embed_dim < 1) throw std::invalid_argument("embed_dim must be >= 1");
  if (kind == "charcnn") {
    if (kernels.empty() || kernels.size() != pools.size()) {
      throw std::invalid_argument("kernel/pool lists must be non-empty and equal length");
    }
    for (int k : kernels) {
      if (k < 1) throw std::invalid_argument("kernel sizes must be >= 1");
    }
    for (int p : pools) {
      if (p < 0) throw std::invalid_argument("pool windows must be >= 0");
    }
    if (filters < 1) throw std::invalid_argument("filters must be >= 1");
    if (use_se && (se_ratio < 1 || filters % se_ratio != 0)) {
      throw std::invalid_argument("se_ratio must divide the filter count");
    }
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must be in [0,1)");
  } else {
    if (hidden < 1) throw std::invalid_argument("hidden must be >= 1");
  }
  if (optimizer != "adam" && optimizer != "nadam") {
    throw std::invalid_argument("unknown optimizer: " + optimizer);
  }
}

nlohmann::json NetworkSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = kind;
  j["t_max"] = t_max;
  j["embed_dim"] = embed_dim;
  j["kernels"] = kernels;
  j["pools"] = pools;
  j["filters"] = filters;
  j["use_se"] = use_se;
  j["se_ratio"] = se_ratio;
  j["dropout"] = dropout;
  j["relu_theta"] = relu_theta;
  j["hidden"] = hidden;
  j["mask_padding"] = mask_padding;
  j["optimizer"] = optimizer;
  return j;
}

NetworkSpec NetworkSpec::from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.kind = j.at("kind").get<std::string>();
  s.t_max = j.at("t_max").get<int>();
  s.embed_dim = j.at("embed_dim").get<int>();
  s.kernels = j.at("kernels").get<std::vector<int>>();
  s.pools = j.at("pools").get<std::vector<int>>();
  s.filters = j.at("filters").get<int>();
  s.use_se = j.at("use_se").get<bool>();
  s.se_ratio = j.at("se_ratio").get<int>();
  s.dropout = j.at("dropout").get<double>();
  s.relu_theta = j.at("relu_theta").get<double>();
  s.hidden = j.at("hidden").get<int>();
  s.mask_padding = j.at("mask_padding").get<bool>();
  s.optimizer = j.at("optimizer").get<std::string>();
  s.validate();
  return s;
}

NetworkSpec NetworkSpec::table_config(const std::string& kind) {
  NetworkSpec s;
  s.kind = kind;
  if (kind == "charcnn") {
    s.embed_dim = 128;
    s.filters = 64;
    s.kernels = {5, 3, 1};
    s.pools = {3, 3, 0};
    s.use_se = true;
    s.se_ratio = 16;
    s.optimizer = "nadam";
  } else if (kind == "chargru") {
    s.embed_dim = 128;
    s.hidden = 64;
    s.optimizer = "adam";
  } else if (kind == "charbilstm") {
    s.embed_dim = 32;
    s.hidden = 32;
    s.optimizer = "adam";
  } else {
    throw std::invalid_argument("unknown model kind: " + kind);
  }
  s.validate();
  return s;
}

NetworkSpec NetworkSpec::desk_config(const std::string& kind) {
  NetworkSpec s;
  s.kind = kind;
  s.t_max = 200;
  if (kind == "charcnn") {
    s.embed_dim = 32;
    s.filters = 32;
    s.kernels = {5, 3, 1};
    s.pools = {3, 3, 0};
    s.use_se = true;
    s.se_ratio = 8;
    s.optimizer = "nadam";
  } else if (kind == "chargru") {
    s.embed_dim = 32;
    s.hidden = 32;
    s.optimizer = "adam";
  } else if (kind == "charbilstm") {
    s.embed_dim = 32;
    s.hidden = 16;
    s.optimizer = "adam";
  } else {
    throw std::invalid_argument("unknown model kind: " + kind);
  }
  s.validate();
  return s;
}

void save_checkpoint(const std::string& path, Model<float>& model,
                     const std::string& config_digest) {
  auto params = model.params();
  nlohmann::json manifest = nlohmann::json::array();
  size_t payload_bytes = 0;
  for (auto* p : params) {
    manifest.push_back({{"name", p->name}, {"shape", p->shape}});
    payload_bytes += p->value.size() * sizeof(float);
  }
  std::string payload;
  payload.reserve(payload_bytes);
  for (auto* p : params) {
    payload.append(reinterpret_cast<const char*>(p->value.data()),
                   p->value.size() * sizeof(float));
  }
  nlohmann::json header;
  header["spec"] = model.spec().to_json();
  header["alphabet"] = kAlphabetTag;
  header["config_digest"] = config_digest;
  header["params"] = manifest;
  header["payload_bytes"] = payload.size();
  header["payload_sha256"] = sha256_hex(payload);
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const uint32_t hlen = static_cast<uint32_t>(header_str.size());
  unsigned char lenb[4] = {static_cast<unsigned char>(hlen & 0xff),
                           static_cast<unsigned char>((hlen >> 8) & 0xff),
                           static_cast<unsigned char>((hlen >> 16) & 0xff),
                           static_cast<unsigned char>((hlen >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(lenb), 4);
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("write failed for checkpoint: " + path);
}

Model<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic))) {
    throw std::runtime_error("truncated checkpoint (missing magic): " + path);
  }
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    // same container family but a different trailing version digit
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic) - 1) == 0) {
      throw std::runtime_error(std::string("unsupported checkpoint version '") + magic[7] +
                               "': " + path);
    }
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  }
  unsigned char lenb[4];
  if (!in.read(reinterpret_cast<char*>(lenb), 4)) {
    throw std::runtime_error("truncated checkpoint (missing header length): " + path);
  }
  const uint32_t hlen = static_cast<uint32_t>(lenb[0]) | (static_cast<uint32_t>(lenb[1]) << 8) |
                        (static_cast<uint32_t>(lenb[2]) << 16) |
                        (static_cast<uint32_t>(lenb[3]) << 24);
  std::string header_str(hlen, '\0');
  if (!in.read(header_str.data(), hlen)) {
    throw std::runtime_error("truncated checkpoint (header): " + path);
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint header: " + std::string(e.what()));
  }
  if (header.value("alphabet", "") != kAlphabetTag) {
    std::fprintf(stderr,
                 "warning: checkpoint %s was written for alphabet '%s', expected '%s'\n",
                 path.c_str(), header.value("alphabet", "").c_str(), kAlphabetTag);
  }
  Model<float> model(NetworkSpec::from_json(header.at("spec")), 0);
  auto params = model.params();
  const auto& manifest = header.at("params");
  if (manifest.size() != params.size()) {
    throw std::runtime_error("checkpoint manifest mismatch: tensor count differs");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& m = manifest[i];
    if (m.at("name").get<std::string>() != params[i]->name ||
        m.at("shape").get<std::vector<int>>() != params[i]->shape) {
      throw std::runtime_error("checkpoint manifest mismatch at tensor " + params[i]->name);
    }
  }
  const size_t payload_bytes = header.at("payload_bytes").get<size_t>();
  std::string payload(payload_bytes, '\0');
  if (!in.read(payload.data(), static_cast<std::streamsize>(payload_bytes))) {
    throw std::runtime_error("truncated checkpoint (payload): " + path);
  }
  if (sha256_hex(payload) != header.at("payload_sha256").get<std::string>()) {
    throw std::runtime_error("checkpoint payload checksum mismatch: " + path);
  }
  size_t off = 0;
  for (auto* p : params) {
    std::memcpy(p->value.data(), payload.data() + off, p->value.size() * sizeof(float));
    off += p->value.size() * sizeof(float);
  }
  return model;
}

}  // namespace charphish
