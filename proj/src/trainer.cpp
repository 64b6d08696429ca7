// Copyright 2026 The crowdpoint Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "crowdpoint/trainer.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

namespace crowdpoint {

std::string format_step(const StepRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "step=%lld loss=%.8f cls=%.8f reg=%.6f matches=%lld",
                static_cast<long long>(r.step), r.loss, r.cls, r.reg, static_cast<long long>(r.matches));
  return buf;
}

std::string format_epoch(const EpochRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "epoch=%lld val_mae=%.4f val_f1=%.2f", static_cast<long long>(r.epoch), r.val_mae,
                r.val_f1);
  return buf;
}

std::vector<Scene> load_split(const std::string& path, const RunConfig& cfg) {
  if (path == "synthetic") {
    const auto& s = cfg.synth;
    return synth_scenes(static_cast<int>(s.count), {static_cast<int>(s.min_points), static_cast<int>(s.max_points)},
                        static_cast<int>(s.size), s.seed);
  }
  auto scenes = load_annotations(path);
  if (scenes.empty()) throw std::runtime_error("no annotated images found in " + path);
  return scenes;
}

MetricsReport evaluate_scenes(Network<float>& net, const std::vector<Scene>& scenes, double tau, double delta) {
  if (scenes.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<std::pair<int64_t, int64_t>> counts;
  std::vector<LocalizationResult> loc;
  for (const Scene& s : scenes) {
    const auto pred = predict_points(net, s.image, tau);
    counts.emplace_back(static_cast<int64_t>(s.points.size()), static_cast<int64_t>(pred.size()));
    loc.push_back(localization_metrics(pred, s.points, delta));
  }
  MetricsReport r;
  r.counting = counting_metrics(counts);
  r.localization = aggregate_localization(loc);
  r.tau = tau;
  r.delta = delta;
  return r;
}

Checkpoint snapshot_checkpoint(Network<float>& net, const RunConfig& cfg, const Adam* optimizer, int64_t epoch,
                               int64_t step) {
  Checkpoint c;
  c.fused = net.fused();
  c.epoch = epoch;
  c.step = step;
  c.config_text = format_config(cfg);
  c.entries = module_state(net);
  sort_entries(c.entries);
  if (optimizer) {
    c.optimizer = optimizer->state();
    sort_entries(c.optimizer);
  }
  return c;
}

LoadedModel load_model(const std::filesystem::path& path) {
  LoadedModel out;
  out.checkpoint = load_checkpoint(path);
  out.config = parse_config(out.checkpoint.config_text, path.string() + " (embedded config)");
  // The weights come from the checkpoint; never consult the pretrained file.
  ModelConfig mc = out.config.model;
  mc.backbone.pretrained = false;
  out.net = std::make_unique<Network<float>>(mc, out.config.train.seed);
  if (out.checkpoint.fused) out.net->prepare_fused();
  try {
    load_module_state(*out.net, out.checkpoint.entries);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  out.net->set_training(false);
  return out;
}

namespace {

Tensor<float> stack_images(const std::vector<Scene>& batch) {
  const Shape& s = batch.front().image.shape();
  Tensor<float> out({static_cast<int64_t>(batch.size()), s[0], s[1], s[2]});
  const int64_t per = shape_numel(s);
  for (size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].image.shape() != s) throw std::invalid_argument("batch scenes differ in size");
    std::copy(batch[b].image.data(), batch[b].image.data() + per, out.data() + static_cast<int64_t>(b) * per);
  }
  return out;
}

}  // namespace

TrainSummary train_model(const RunConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  const auto train_scenes = load_split(cfg.data.train, cfg);
  const auto val_scenes = cfg.data.val.empty() ? train_scenes : load_split(cfg.data.val, cfg);
  for (const auto& s : train_scenes) {
    if (s.height() < cfg.data.crop_size || s.width() < cfg.data.crop_size) {
      throw std::invalid_argument("scene " + s.id + " is smaller than data.crop_size");
    }
  }

  Network<float> net(cfg.model, cfg.train.seed);
  net.set_training(true);
  Adam adam(net.named_parameters(), {cfg.train.lr, cfg.train.beta1, cfg.train.beta2, cfg.train.adam_eps,
                                     cfg.train.weight_decay});
  int64_t epoch = 0, step = 0;
  if (!cfg.train.resume.empty()) {
    if (!std::filesystem::exists(cfg.train.resume)) {
      throw std::runtime_error("train.resume: checkpoint not found: " + cfg.train.resume);
    }
    const Checkpoint ckpt = load_checkpoint(cfg.train.resume);
    if (ckpt.fused) throw std::runtime_error("train.resume: cannot resume from a fused checkpoint");
    load_module_state(net, ckpt.entries);
    adam.load_state(ckpt.optimizer, ckpt.step);
    epoch = ckpt.epoch;
    step = ckpt.step;
  }

  TrainSummary summary;
  const std::filesystem::path out_dir = cfg.train.out_dir;
  std::ofstream log;
  if (opts.write_outputs) {
    std::filesystem::create_directories(out_dir);
    log.open(out_dir / "train.log", cfg.train.resume.empty() ? std::ios::trunc : std::ios::app);
  }
  const auto emit = [&](const std::string& line) {
    if (log.is_open()) log << line << '\n' << std::flush;
    if (opts.on_line) opts.on_line(line);
  };

  AugmentConfig aug;
  aug.crop_size = static_cast<int>(cfg.data.crop_size);
  aug.flip_probability = cfg.data.flip_probability;
  const int64_t crop = cfg.data.crop_size;
  const auto anchors = make_anchors(crop, crop, kAnchorStride);

  for (++epoch; epoch <= cfg.train.epochs; ++epoch) {
    for (int64_t s = 0; s < cfg.train.steps_per_epoch; ++s) {
      ++step;
      // Per-step stream so resumed runs replay the same samples.
      std::seed_seq seq{cfg.train.seed, static_cast<uint64_t>(step)};
      std::mt19937_64 rng(seq);
      std::uniform_int_distribution<size_t> pick(0, train_scenes.size() - 1);
      std::vector<Scene> batch;
      std::vector<std::vector<Point>> gts;
      for (int64_t b = 0; b < cfg.train.batch_size; ++b) {
        Scene sc = random_flip(random_crop(train_scenes[pick(rng)], aug, rng), aug, rng);
        gts.push_back(sc.points);
        batch.push_back(std::move(sc));
      }
      const DenseOutput<float> dense = net.forward(Var<float>(stack_images(batch)));
      LossResult<float> res = compute_loss(dense, anchors, std::span<const std::vector<Point>>(gts), cfg.loss);
      const double loss = static_cast<double>(res.loss.value()[0]);
      if (!std::isfinite(loss)) throw std::runtime_error("training diverged at step " + std::to_string(step));
      res.loss.backward();
      adam.step();
      adam.zero_grad();
      const StepRecord rec{step, loss, res.breakdown.cls, res.breakdown.reg, res.breakdown.matches};
      summary.steps.push_back(rec);
      emit(format_step(rec));
    }
    EpochRecord er{epoch, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    if (!opts.skip_validation) {
      const MetricsReport m = evaluate_scenes(net, val_scenes, cfg.tau, cfg.delta);
      er.val_mae = m.counting.mae;
      er.val_f1 = m.localization.f1;
      net.set_training(true);
    }
    summary.epochs.push_back(er);
    emit(format_epoch(er));
    if (opts.write_outputs) {
      const Checkpoint ckpt = snapshot_checkpoint(net, cfg, &adam, epoch, step);
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04lld.ckpt", static_cast<long long>(epoch));
      save_checkpoint(out_dir / name, ckpt);
      save_checkpoint(out_dir / "last.ckpt", ckpt);
      summary.last_checkpoint = out_dir / "last.ckpt";
    }
  }
  return summary;
}

}  // namespace crowdpoint
