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

// Acceptance checks: one PASS/FAIL line per criterion, non-zero exit on any
// failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <algorithm>
#include <functional>
#include <sstream>
#include <string>

#include "crowdpoint/blocks.hpp"
#include "crowdpoint/checkpoint.hpp"
#include "crowdpoint/metrics.hpp"
#include "crowdpoint/model.hpp"
#include "crowdpoint/ops.hpp"
#include "crowdpoint/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace crowdpoint;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s [%d] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

template <typename T>
void randomize_bn(Module<T>& m, std::mt19937_64& rng) {
  for (const auto& b : m.named_buffers()) {
    if (b.name.ends_with("running_var")) *b.tensor = oracle::random_tensor<T>(b.tensor->shape(), rng, 0.5, 2.0);
    if (b.name.ends_with("running_mean")) *b.tensor = oracle::random_tensor<T>(b.tensor->shape(), rng, -0.5, 0.5);
  }
  // Batch-norm affine terms live in modules named bn*.
  for (const auto& p : m.named_parameters()) {
    const size_t dot = p.name.rfind('.');
    const size_t owner = p.name.rfind('.', dot - 1);
    if (dot == std::string::npos || p.name.compare(owner == std::string::npos ? 0 : owner + 1, 2, "bn") != 0) continue;
    const bool scale = p.name.ends_with(".weight");
    p.var->mutable_value() =
        oracle::random_tensor<T>(p.var->value().shape(), rng, scale ? 0.5 : -0.5, scale ? 1.5 : 0.5);
  }
}

ModelConfig tiny_model(bool spam, bool afam) {
  ModelConfig cfg;
  cfg.backbone.variant = BackboneVariant::kTiny;
  cfg.decoder = {16, spam, afam};
  cfg.spam.codebook_size = 8;
  return cfg;
}

Outcome repconv_equivalence() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int64_t> ch(1, 16), side(3, 12);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t cin = ch(rng), cout = ch(rng);
    RepConv<float> r(cin, cout, rng);
    randomize_bn(r, rng);
    r.set_training(false);
    r.fuse(true);
    const Var<float> x(oracle::random_tensor<float>({2, cin, side(rng), side(rng)}, rng, -10.0, 10.0));
    NoGradGuard guard;
    worst = std::max(worst, max_abs_diff(r.forward(x, RepConvMode::kTrain).value(),
                                         r.forward(x, RepConvMode::kFused).value()));
  }

  // End to end: identical networks, one fused, all proposals kept.
  Network<float> a(tiny_model(true, true), 55);
  randomize_bn(a, rng);
  Network<float> b(tiny_model(true, true), 55);
  load_module_state(b, module_state(a));
  b.set_training(false);
  b.fuse();
  const auto image = oracle::random_tensor<float>({3, 80, 72}, rng, 0.0, 1.0);
  const auto pa = predict_points(a, image, 0.0), pb = predict_points(b, image, 0.0);
  double px = pa.size() == pb.size() ? 0.0 : 1e9;
  for (size_t i = 0; i < std::min(pa.size(), pb.size()); ++i)
    px = std::max({px, std::abs(pa[i].x - pb[i].x), std::abs(pa[i].y - pb[i].y)});
  return {worst <= 1e-5 && px <= 1e-4,
          fmt("max |train - fused| = %.3g over 100 blocks (tol 1e-5), end-to-end max point shift %.3g px (tol 1e-4)",
              worst, px)};
}

Outcome hungarian_optimality() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int64_t> dim(1, 7), small(0, 3);
  std::uniform_real_distribution<double> real(-5.0, 5.0);
  int exact = 0;
  for (int trial = 0; trial < 200; ++trial) {
    CostMatrix c(dim(rng), dim(rng));
    // Every fourth matrix has small integer costs so ties are common.
    for (double& v : c.costs) v = trial % 4 == 0 ? static_cast<double>(small(rng)) : real(rng);
    const auto got = hungarian(c);
    const auto want = oracle::brute_force_assignment(c);
    if (got.total_cost == want.total && got.pairs == want.pairs) ++exact;
  }
  return {exact == 200, fmt("%.0f/200 totals and pair lists equal to brute force", exact)};
}

Outcome gradients() {
  std::mt19937_64 rng(303);
  Var<double> x(oracle::random_tensor<double>({1, 8, 4, 4}, rng), true);
  const Tensor<double> probe = oracle::random_tensor<double>({1, 8, 4, 4}, rng);

  SpamConfig sc;
  sc.channels = 8;
  sc.heads = 2;
  sc.codebook_size = 4;
  Spam<double> spam(sc, rng);
  std::vector<Var<double>*> spam_inputs{&x};
  for (const auto& p : spam.named_parameters()) spam_inputs.push_back(p.var);
  const auto gs = oracle::check_gradients([&] { return ops::weighted_sum(spam.forward(x), probe); }, spam_inputs);

  AfamConfig ac;
  ac.channels = 8;
  ac.reduction = 2;
  Afam<double> afam(ac, rng);
  std::vector<Var<double>*> afam_inputs{&x};
  for (const auto& p : afam.named_parameters()) afam_inputs.push_back(p.var);
  const auto ga = oracle::check_gradients([&] { return ops::weighted_sum(afam.forward(x), probe); }, afam_inputs);

  DenseOutput<double> d{Var<double>(oracle::random_tensor<double>({1, 2, 4, 4}, rng, -2, 2), true),
                        Var<double>(oracle::random_tensor<double>({1, 1, 4, 4}, rng, -3, 3), true)};
  LossWeights w;
  w.w_loc = 0.05;
  const std::vector<std::vector<Point>> gts{{{1.2, 3.1}, {5.5, 6.0}, {7.0, 0.4}}};
  const auto anchors = make_anchors(8, 8, 2);
  const auto gl = oracle::check_gradients([&] { return compute_loss(d, anchors, gts, w).loss; }, {&d.offsets, &d.logits});

  const double worst = std::max({gs.max_rel_error, ga.max_rel_error, gl.max_rel_error});
  return {worst <= 1e-3, fmt("relative error SPAM %.2g, AFAM %.2g, loss %.2g (tol 1e-3)", gs.max_rel_error,
                             ga.max_rel_error, gl.max_rel_error)};
}

Outcome normalization() {
  std::mt19937_64 rng(404);
  SpamConfig sc;
  sc.channels = 16;
  sc.heads = 4;
  sc.codebook_size = 8;
  Spam<float> spam(sc, rng);
  AfamConfig ac;
  ac.channels = 16;
  Afam<float> afam(ac, rng);
  std::uniform_int_distribution<int64_t> side(2, 10);
  double row_err = 0.0, lo = 1.0, hi = 0.0;
  NoGradGuard guard;
  for (int trial = 0; trial < 50; ++trial) {
    const Var<float> x(oracle::random_tensor<float>({2, 16, side(rng), side(rng)}, rng, -3.0, 3.0));
    SpamTrace<float> st;
    spam.forward(x, &st);
    for (const Tensor<float>* t : {&st.attention, &st.assignments}) {
      const int64_t len = t->shape().back();
      for (int64_t r = 0; r < t->numel() / len; ++r) {
        double s = 0.0;
        for (int64_t k = 0; k < len; ++k) s += (*t)[r * len + k];
        row_err = std::max(row_err, std::abs(s - 1.0));
      }
    }
    AfamTrace<float> at;
    afam.forward(x, &at);
    for (const Tensor<float>* t : {&at.channel_weights, &at.spatial_weights})
      for (int64_t i = 0; i < t->numel(); ++i) {
        lo = std::min(lo, static_cast<double>((*t)[i]));
        hi = std::max(hi, static_cast<double>((*t)[i]));
      }
  }
  return {row_err <= 1e-6 && lo > 0.0 && hi < 1.0,
          fmt("max |row sum - 1| = %.2g (tol 1e-6), sigmoid weights in [%.4g, %.4g]", row_err, lo, hi)};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(505);
  std::uniform_int_distribution<int64_t> count(0, 6);
  std::uniform_real_distribution<double> coord(0.0, 16.0), d(1.0, 6.0);
  int agree = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ScoredPoint> pred(static_cast<size_t>(count(rng)));
    std::vector<Point> gt(static_cast<size_t>(count(rng)));
    for (auto& p : pred) p = {coord(rng), coord(rng), 1.0};
    for (auto& g : gt) g = {coord(rng), coord(rng)};
    const double delta = d(rng);
    if (localization_metrics(pred, gt, delta).tp == oracle::brute_force_max_feasible(pred, gt, delta)) ++agree;
  }
  using Counts = std::vector<std::pair<int64_t, int64_t>>;
  const auto a = counting_metrics(Counts{{4, 4}, {7, 7}});
  const auto b = counting_metrics(Counts{{10, 12}, {20, 18}});
  const auto c = counting_metrics(Counts{{0, 0}, {0, 0}, {3, 0}});
  const bool hand = a.mae == 0.0 && a.mse == 0.0 && b.mae == 2.0 && b.mse == 2.0 && c.mae == 1.0 &&
                    c.mse == std::sqrt(3.0);
  return {agree == 50 && hand, fmt("%.0f/50 TP counts equal the exhaustive optimum, hand counting cases %s", agree) +
                                   (hand ? "exact" : "WRONG")};
}

Outcome overfit(const std::filesystem::path& source_dir) {
  testutil::TempDir dir("accept_overfit");
  RunConfig cfg = load_config(source_dir / "configs" / "tiny_synthetic.cfg");
  cfg.train.out_dir = dir.path().string();
  TrainOptions opts;
  opts.skip_validation = true;
  const auto t0 = Clock::now();
  const TrainSummary s = train_model(cfg, opts);
  const double minutes = std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
  auto loaded = load_model(s.last_checkpoint);
  const MetricsReport m = evaluate_scenes(*loaded.net, load_split(cfg.data.train, cfg), cfg.tau, 4.0);
  double worst = 0.0;
  for (const auto& [gt, pred] : m.counting.per_scene) worst = std::max(worst, std::abs(double(gt - pred)));
  const bool ok = s.steps.size() <= 2000 && worst <= 1.0 && m.localization.f1 >= 90.0 && minutes < 15.0;
  return {ok, fmt("%.0f steps in %.2f min, worst per-scene count error %.0f", double(s.steps.size()), minutes, worst) +
                  fmt(", F1 %.2f at delta 4 (need <= 1 and >= 90)", m.localization.f1)};
}

Outcome ablation_audit() {
  struct Row {
    const char* name;
    bool spam, afam;
  };
  std::string detail;
  bool ok = true;
  for (const Row& row : {Row{"BaseLine", false, false}, Row{"+SPAM", true, false}, Row{"+AFAM", false, true},
                         Row{"full", true, true}}) {
    Network<float> net(tiny_model(row.spam, row.afam), 1);
    bool attn = false, codes = false, channel = false, spatial = false, repconv = false;
    for (const auto& p : net.named_parameters()) {
      attn |= p.name.find("decoder.spam.transformer.attn.query") == 0;
      codes |= p.name == "decoder.spam.codebook.codes";
      channel |= p.name.find("decoder.afam8.channel_att.reduce") == 0;
      spatial |= p.name.find("decoder.afam4.conv_a") == 0;
      repconv |= p.name.find(".repconv.") != std::string::npos;
    }
    const bool row_ok = attn == row.spam && codes == row.spam && channel == row.afam && spatial == row.afam &&
                        repconv == row.afam;
    ok &= row_ok;
    detail += std::string(detail.empty() ? "" : ", ") + row.name + (row_ok ? " ok" : " WRONG");
  }
  return {ok, detail};
}

Outcome shape_contract() {
  Network<float> net(tiny_model(true, true), 2);
  net.set_training(false);
  std::mt19937_64 rng(808);
  int checked = 0, exact = 0;
  const auto check = [&](int64_t h, int64_t w) {
    const auto padded = pad_to_multiple(oracle::random_tensor<float>({3, h, w}, rng, 0.0, 1.0), kInputMultiple);
    const int64_t ph = padded.image.dim(1), pw = padded.image.dim(2);
    NoGradGuard guard;
    const auto d = net.forward(Var<float>(padded.image.reshaped({1, 3, ph, pw})));
    const auto anchors = make_anchors(ph, pw, kAnchorStride);
    const Shape want_off{1, 2, ph / 2, pw / 2}, want_logit{1, 1, ph / 2, pw / 2};
    ++checked;
    if (d.offsets.value().shape() == want_off && d.logits.value().shape() == want_logit &&
        static_cast<int64_t>(anchors.size()) == (ph / 2) * (pw / 2))
      ++exact;
  };
  // Every size on each axis, paired with a spread of sizes on the other.
  for (int64_t s = 32; s <= 128; ++s) {
    const int64_t other = 32 + (s * 37) % 97;
    check(s, other);
    check(other, s);
  }
  return {exact == checked, fmt("%.0f/%.0f inputs with output = padded / 2 and anchors = grid cells", exact, checked)};
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome determinism() {
  testutil::TempDir a("accept_det_a"), b("accept_det_b");
  RunConfig cfg;
  cfg.model = tiny_model(true, true);
  cfg.train.lr = 1e-3;
  cfg.train.epochs = 1;
  cfg.train.steps_per_epoch = 30;
  cfg.train.seed = 9;
  cfg.data.crop_size = 64;
  cfg.synth = {3, 2, 8, 64, 7};
  TrainOptions opts;
  opts.skip_validation = true;
  cfg.train.out_dir = a.path().string();
  const auto ra = train_model(cfg, opts);
  cfg.train.out_dir = b.path().string();
  const auto rb = train_model(cfg, opts);
  bool same = ra.steps.size() == rb.steps.size();
  for (size_t i = 0; same && i < ra.steps.size(); ++i) same = ra.steps[i].loss == rb.steps[i].loss;

  const Checkpoint loaded = load_checkpoint(ra.last_checkpoint);
  save_checkpoint(a / "again.ckpt", loaded);
  const bool bytes = read_file(ra.last_checkpoint) == read_file(a / "again.ckpt");
  return {same && bytes, std::string("loss traces ") + (same ? "identical" : "DIFFER") + " over " +
                             std::to_string(ra.steps.size()) + " steps, checkpoint save/load/save " +
                             (bytes ? "byte-identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path source = argc > 1 ? argv[1] : CROWDPOINT_SOURCE_DIR;
  report(1, "RepConv fusion equivalence", repconv_equivalence);
  report(2, "Hungarian optimality", hungarian_optimality);
  report(3, "gradient correctness", gradients);
  report(4, "normalization invariants", normalization);
  report(5, "metric oracles", metric_oracles);
  report(6, "desk-scale overfit", [&] { return overfit(source); });
  report(7, "ablation wiring", ablation_audit);
  report(8, "shape contract", shape_contract);
  report(9, "determinism", determinism);
  std::printf("%s: %d of 9 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
