// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cmcr/model/trainer.hpp"

#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include <json.hpp>

namespace cmcr::model {

namespace fs = std::filesystem;

namespace {

std::vector<size_t> epoch_order(size_t n, uint64_t seed, int64_t epoch) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::mt19937_64 rng(mix_seed(seed, 0x5453 + static_cast<uint64_t>(epoch)));
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

// Batch for a given global step; a pure function of (manifest, cfg, step).
data::Batch batch_for_step(const std::vector<data::ManifestEntry>& manifest,
                           const ModelConfig& cfg, int64_t steps_per_epoch,
                           int64_t step) {
  const int64_t epoch = step / steps_per_epoch;
  const int64_t pos = step % steps_per_epoch;
  const auto order = epoch_order(manifest.size(), cfg.seed, epoch);
  std::vector<data::BatchItem> items;
  items.reserve(static_cast<size_t>(cfg.batch_size));
  for (int i = 0; i < cfg.batch_size; ++i)
    items.push_back(data::load_pair(
        manifest[order[static_cast<size_t>(pos * cfg.batch_size + i)]]));
  return data::make_batch(items, cfg.stft);
}

// Single-producer single-consumer bounded queue for batch prefetch.
class BatchQueue {
 public:
  explicit BatchQueue(size_t capacity) : cap_(capacity) {}

  void push(data::Batch&& b) {
    std::unique_lock lk(mu_);
    not_full_.wait(lk, [&] { return q_.size() < cap_; });
    q_.push_back(std::move(b));
    not_empty_.notify_one();
  }

  data::Batch pop() {
    std::unique_lock lk(mu_);
    not_empty_.wait(lk, [&] { return !q_.empty(); });
    data::Batch b = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return b;
  }

 private:
  size_t cap_;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<data::Batch> q_;
};

std::string ckpt_name(const std::string& dir, int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%06lld.bin", static_cast<long long>(step));
  return (fs::path(dir) / buf).string();
}

void check_finite(double v, const char* component, int64_t step) {
  require(std::isfinite(v),
          str_cat("train: non-finite loss at step ", step, ": component ",
                  component, " = ", v));
}

}  // namespace

TrainSummary train(const ModelConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  auto manifest = data::load_manifest(opts.manifest_path);
  require(static_cast<int>(manifest.size()) >= cfg.batch_size,
          str_cat("train: manifest has ", manifest.size(),
                  " items, need at least batch_size = ", cfg.batch_size));
  fs::create_directories(opts.out_dir);

  CmcrNet<float> net;
  net.init(cfg);
  net.training = true;
  auto named = net.params();
  std::vector<Tensor<float>> params;
  params.reserve(named.size());
  for (auto& p : named) params.push_back(p.tensor);
  Adam<float> opt(params, static_cast<float>(cfg.lr));
  auto encoder = nn::FrozenEncoder<float>::make(nn::EncoderKind::kLogMelProj,
                                                cfg.stft, cfg.cr_n_mels,
                                                cfg.cr_embed_dim);

  int64_t start_step = 0;
  if (!opts.resume_from.empty()) {
    const auto meta = load_checkpoint(opts.resume_from, net, &opt);
    start_step = meta.step_count;
  }

  const int64_t steps_per_epoch =
      static_cast<int64_t>(manifest.size()) / cfg.batch_size;
  const int64_t total_steps =
      cfg.max_steps > 0 ? cfg.max_steps : steps_per_epoch * cfg.epochs;
  require(total_steps >= 1, "train: zero training steps configured");

  cfg.save((fs::path(opts.out_dir) / "config.cfg").string());
  TrainSummary summary;
  summary.log_path = (fs::path(opts.out_dir) / "train_log.jsonl").string();
  std::ofstream log(summary.log_path, std::ios::app);
  require(log.good(), "train: cannot write " + summary.log_path);

  // Optional prefetch thread. Batches are pure functions of (seed, step), so
  // prefetching cannot change the trajectory.
  std::unique_ptr<BatchQueue> queue;
  std::thread loader;
  if (cfg.loader_threads > 0 && start_step < total_steps) {
    queue = std::make_unique<BatchQueue>(2);
    loader = std::thread([&, start_step, total_steps] {
      for (int64_t s = start_step; s < total_steps; ++s)
        queue->push(batch_for_step(manifest, cfg, steps_per_epoch, s));
    });
  }

  for (int64_t s = start_step; s < total_steps; ++s) {
    data::Batch batch = queue ? queue->pop()
                              : batch_for_step(manifest, cfg, steps_per_epoch, s);
    auto loss = total_loss(batch, net, encoder);
    const int64_t step = s + 1;
    const double total_v = loss.total.item();
    const double mse_v = loss.mse.item();
    const double ca_v = loss.ca.item();
    const double cr_v = loss.cr.item();
    check_finite(mse_v, "mse", step);
    check_finite(ca_v, "ca", step);
    check_finite(cr_v, "cr", step);
    check_finite(total_v, "total", step);

    backward(loss.total);
    require(!encoder.projection.has_grad(),
            "train: frozen encoder received gradient");
    opt.step();

    nlohmann::json rec = {{"step", step},
                          {"total", total_v},
                          {"mse", mse_v},
                          {"ca", ca_v},
                          {"cr", cr_v}};
    log << rec.dump() << "\n";
    log.flush();

    if (summary.steps_run == 0) summary.first_total = total_v;
    summary.last_total = total_v;
    ++summary.steps_run;
    if (cfg.ckpt_every > 0 && step % cfg.ckpt_every == 0)
      save_checkpoint(ckpt_name(opts.out_dir, step), net, opt);
  }
  if (loader.joinable()) loader.join();

  summary.final_checkpoint = (fs::path(opts.out_dir) / "ckpt_final.bin").string();
  save_checkpoint(summary.final_checkpoint, net, opt);
  return summary;
}

namespace {

CmcrNet<float> net_from_checkpoint(const std::string& ckpt_path) {
  const auto meta = read_checkpoint_meta(ckpt_path);
  CmcrNet<float> net;
  net.init(meta.config);
  load_checkpoint(ckpt_path, net, nullptr);
  net.training = false;
  return net;
}

}  // namespace

void enhance_file(const std::string& in_wav, const std::string& ckpt_path,
                  const std::string& out_wav) {
  CmcrNet<float> net = net_from_checkpoint(ckpt_path);
  const dsp::Waveform in = dsp::ingest_wav(in_wav);
  dsp::save_wav(out_wav, enhance_waveform(in, net));
}

void dump_attention(const std::string& in_wav, const std::string& ckpt_path,
                    const std::string& out_path) {
  CmcrNet<float> net = net_from_checkpoint(ckpt_path);
  const dsp::Waveform in = dsp::ingest_wav(in_wav);
  NoGradGuard no_grad;
  enhance_waveform(in, net);  // runs forward; CMs snapshot their maps

  ArrayFile af;
  nlohmann::json meta;
  meta["kind"] = "attention_dump";
  meta["source"] = in_wav;
  meta["num_cm"] = static_cast<int>(net.cms.size());
  af.meta_json = meta.dump();
  for (size_t i = 0; i < net.cms.size(); ++i) {
    auto& cm = net.cms[i];
    const Shape shape = {cm.channels, cm.f_h, cm.f_h};
    const std::string prefix = "cm" + std::to_string(i);
    af.entries.push_back({prefix + ".S", shape, cm.last_scores});
    af.entries.push_back({prefix + ".M_r", shape, cm.last_m_rel});
    af.entries.push_back({prefix + ".M_i", shape, cm.last_m_irr});
  }
  af.save(out_path);
}

}  // namespace cmcr::model
