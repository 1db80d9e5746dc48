// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cmcr/model/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace cmcr::model {

namespace {
constexpr char kMagic[] = "CMCRARR1\n";
constexpr size_t kMagicLen = sizeof(kMagic) - 1;
}  // namespace

void ArrayFile::save(const std::string& path) const {
  nlohmann::json j;
  j["meta"] = meta_json.empty() ? nlohmann::json::object()
                                : nlohmann::json::parse(meta_json);
  nlohmann::json ents = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& e : entries) {
    require(shape_numel(e.shape) == static_cast<int64_t>(e.data.size()),
            "array file: shape/data mismatch for " + e.name);
    ents.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", offset}});
    offset += e.data.size();
  }
  j["entries"] = std::move(ents);
  const std::string header = j.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    require(f.good(), "array file: cannot write " + tmp);
    f.write(kMagic, static_cast<std::streamsize>(kMagicLen));
    const uint64_t hlen = header.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& e : entries)
      f.write(reinterpret_cast<const char*>(e.data.data()),
              static_cast<std::streamsize>(e.data.size() * sizeof(float)));
    require(f.good(), "array file: short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

ArrayFile ArrayFile::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "array file: cannot open " + path);
  char magic[kMagicLen];
  f.read(magic, static_cast<std::streamsize>(kMagicLen));
  require(f.good() && std::memcmp(magic, kMagic, kMagicLen) == 0,
          "array file: " + path + " is not a checkpoint container");
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  require(f.good() && hlen > 0 && hlen < (1ull << 30), "array file: bad header length");
  std::string header(hlen, '\0');
  f.read(header.data(), static_cast<std::streamsize>(hlen));
  require(f.good(), "array file: truncated header in " + path);
  nlohmann::json j = nlohmann::json::parse(header, nullptr, false);
  require(!j.is_discarded(), "array file: corrupt header in " + path);

  ArrayFile out;
  out.meta_json = j.value("meta", nlohmann::json::object()).dump();
  for (const auto& e : j.at("entries")) {
    ArrayEntry a;
    a.name = e.at("name").get<std::string>();
    a.shape = e.at("shape").get<Shape>();
    a.data.resize(static_cast<size_t>(shape_numel(a.shape)));
    out.entries.push_back(std::move(a));
  }
  for (auto& a : out.entries) {
    f.read(reinterpret_cast<char*>(a.data.data()),
           static_cast<std::streamsize>(a.data.size() * sizeof(float)));
    require(f.good(), "array file: truncated data for " + a.name);
  }
  return out;
}

const ArrayEntry* ArrayFile::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

void save_checkpoint(const std::string& path, CmcrNet<float>& net,
                     Adam<float>& opt) {
  ArrayFile af;
  auto params = net.params();
  require(params.size() == opt.size(), "checkpoint: optimizer/net param mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    af.entries.push_back(
        {p.name, p.tensor.shape(),
         std::vector<float>(p.tensor.data().begin(), p.tensor.data().end())});
    af.entries.push_back({p.name + ".adam_m",
                          {static_cast<int64_t>(opt.moment1(i).size())},
                          opt.moment1(i)});
    af.entries.push_back({p.name + ".adam_v",
                          {static_cast<int64_t>(opt.moment2(i).size())},
                          opt.moment2(i)});
  }
  for (const auto& b : net.buffers())
    af.entries.push_back({"buffer:" + b.name,
                          {static_cast<int64_t>(b.data->size())},
                          *b.data});

  nlohmann::json meta;
  meta["kind"] = "checkpoint";
  meta["config"] = net.cfg.canonical();
  char fp[32];
  std::snprintf(fp, sizeof(fp), "%016llx",
                static_cast<unsigned long long>(net.cfg.arch_fingerprint()));
  meta["arch_fingerprint"] = fp;
  meta["step_count"] = opt.step_count();
  meta["adam"] = {{"lr", opt.lr}, {"beta1", opt.beta1}, {"beta2", opt.beta2},
                  {"eps", opt.eps}};
  af.meta_json = meta.dump();
  af.save(path);
}

namespace {

CheckpointMeta parse_meta(const ArrayFile& af, const std::string& path) {
  nlohmann::json meta = nlohmann::json::parse(af.meta_json);
  require(meta.value("kind", "") == std::string("checkpoint"),
          "checkpoint: " + path + " is not a model checkpoint");
  CheckpointMeta m;
  m.config = ModelConfig::from_text(meta.at("config").get<std::string>());
  m.arch_fingerprint = std::stoull(meta.at("arch_fingerprint").get<std::string>(),
                                   nullptr, 16);
  m.step_count = meta.at("step_count").get<int64_t>();
  return m;
}

}  // namespace

CheckpointMeta read_checkpoint_meta(const std::string& path) {
  return parse_meta(ArrayFile::load(path), path);
}

CheckpointMeta load_checkpoint(const std::string& path, CmcrNet<float>& net,
                               Adam<float>* opt) {
  ArrayFile af = ArrayFile::load(path);
  CheckpointMeta m = parse_meta(af, path);
  require(m.arch_fingerprint == net.cfg.arch_fingerprint(),
          "checkpoint: config fingerprint mismatch (checkpoint architecture "
          "differs from the requested config)");

  auto params = net.params();
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const ArrayEntry* e = af.find(p.name);
    require(e != nullptr, "checkpoint: missing parameter " + p.name);
    require(e->shape == p.tensor.shape(),
            "checkpoint: shape mismatch for " + p.name);
    std::copy(e->data.begin(), e->data.end(), p.tensor.data().begin());
    if (opt) {
      const ArrayEntry* em = af.find(p.name + ".adam_m");
      const ArrayEntry* ev = af.find(p.name + ".adam_v");
      require(em && ev, "checkpoint: missing optimizer state for " + p.name);
      opt->moment1(i) = em->data;
      opt->moment2(i) = ev->data;
    }
  }
  for (auto& b : net.buffers()) {
    const ArrayEntry* e = af.find("buffer:" + b.name);
    require(e != nullptr, "checkpoint: missing buffer " + b.name);
    require(e->data.size() == b.data->size(),
            "checkpoint: buffer size mismatch for " + b.name);
    *b.data = e->data;
  }
  if (opt) {
    nlohmann::json meta = nlohmann::json::parse(af.meta_json);
    opt->set_step_count(m.step_count);
    opt->lr = meta["adam"]["lr"].get<float>();
    opt->beta1 = meta["adam"]["beta1"].get<float>();
    opt->beta2 = meta["adam"]["beta2"].get<float>();
    opt->eps = meta["adam"]["eps"].get<float>();
  }
  return m;
}

}  // namespace cmcr::model
