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

#include <doctest.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "crowdpoint/commands.hpp"
#include "crowdpoint/image_io.hpp"
#include "crowdpoint/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace crowdpoint;

namespace {

RunConfig small_run(const std::filesystem::path& out_dir, int64_t steps) {
  RunConfig cfg;
  cfg.model.backbone.variant = BackboneVariant::kTiny;
  cfg.model.decoder.width = 16;
  cfg.model.spam.codebook_size = 8;
  cfg.train.lr = 1e-3;
  cfg.train.epochs = 1;
  cfg.train.steps_per_epoch = steps;
  cfg.train.seed = 3;
  cfg.train.out_dir = out_dir.string();
  cfg.data.crop_size = 64;
  cfg.synth.count = 3;
  cfg.synth.size = 64;
  cfg.synth.min_points = 2;
  cfg.synth.max_points = 6;
  return cfg;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

// One trained checkpoint shared by the command tests.
const std::filesystem::path& trained_checkpoint() {
  static testutil::TempDir dir("cli_model");
  static const std::filesystem::path path = [] {
    RunConfig cfg = small_run(dir.path(), 40);
    TrainOptions opts;
    opts.skip_validation = true;
    return train_model(cfg, opts).last_checkpoint;
  }();
  return path;
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig cfg = parse_config(
      "# comment\nmodel.backbone = tiny\n\ntrain.lr = 0.002  # inline\nspam.fuse = concat_project\n"
      "decoder.use_afam = false\ntrain.out_dir = some dir\n");
  CHECK(cfg.model.backbone.variant == BackboneVariant::kTiny);
  CHECK(cfg.train.lr == 0.002);
  CHECK(cfg.model.spam.fuse == SpamFuse::kConcatProject);
  CHECK_FALSE(cfg.model.decoder.use_afam);
  CHECK(cfg.train.out_dir == "some dir");
  CHECK(cfg.train.beta1 == 0.9);
  CHECK(cfg.train.beta2 == 0.999);
  CHECK(cfg.train.weight_decay == 0.0);
  CHECK(cfg.tau == 0.5);

  CHECK_THROWS_WITH(parse_config("train.lrr = 1\n"), doctest::Contains("train.lrr"));
  CHECK_THROWS_WITH(parse_config("train.lr = fast\n"), doctest::Contains("train.lr"));
  CHECK_THROWS_WITH(parse_config("train.lr = -1\n"), doctest::Contains("train.lr"));
  CHECK_THROWS_WITH(parse_config("decoder.width = 0\n"), doctest::Contains("decoder.width"));
  CHECK_THROWS_WITH(parse_config("model.backbone = vgg\n"), doctest::Contains("model.backbone"));
  CHECK_THROWS_WITH(parse_config("data.crop_size = 100\n"), doctest::Contains("data.crop_size"));
  CHECK_THROWS_WITH(parse_config("train.seed = 1\ntrain.seed = 2\n"), doctest::Contains("already set"));
  CHECK_THROWS(parse_config("no equals sign\n"));
}

TEST_CASE("formatted configs parse back to the same text") {
  RunConfig cfg;
  cfg.train.lr = 0.1 + 0.2;
  cfg.model.afam.split_channels = true;
  cfg.data.val = "val/dir";
  const std::string text = format_config(cfg);
  CHECK(format_config(parse_config(text)) == text);
  CHECK(parse_config(text).train.lr == cfg.train.lr);
}

TEST_CASE("the documented reference matches the generated one") {
  const auto doc = std::filesystem::path(CROWDPOINT_SOURCE_DIR) / "docs" / "CONFIG.md";
  REQUIRE(std::filesystem::exists(doc));
  CHECK(read_file(doc) == config_reference_markdown());
  const std::string defaults = format_config({});
  CHECK(config_reference().size() == static_cast<size_t>(std::count(defaults.begin(), defaults.end(), '\n')));
}

TEST_CASE("checkpoint bytes round-trip") {
  testutil::TempDir dir("ckpt");
  Network<float> net(small_run(dir.path(), 1).model, 5);
  Checkpoint c = snapshot_checkpoint(net, small_run(dir.path(), 1), nullptr, 3, 77);
  save_checkpoint(dir / "a.ckpt", c);
  const Checkpoint back = load_checkpoint(dir / "a.ckpt");
  CHECK(back == c);
  save_checkpoint(dir / "b.ckpt", back);
  CHECK(read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt"));

  std::string bytes = read_file(dir / "a.ckpt");
  CHECK_THROWS_WITH(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), doctest::Contains("truncated"));
  bytes[0] = 'X';
  CHECK_THROWS_WITH(deserialize_checkpoint(bytes), doctest::Contains("magic"));
  CHECK_THROWS_WITH(load_checkpoint(dir / "missing.ckpt"), doctest::Contains("missing.ckpt"));
}

TEST_CASE("loading into a different architecture names the mismatches") {
  testutil::TempDir dir("ckpt_mismatch");
  RunConfig cfg = small_run(dir.path(), 1);
  Network<float> net(cfg.model, 5);
  const auto entries = module_state(net);
  cfg.model.decoder.width = 8;
  cfg.model.decoder.use_spam = false;
  Network<float> other(cfg.model, 5);
  try {
    load_module_state(other, entries);
    FAIL("expected a mismatch");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("decoder.conv16.conv.weight") != std::string::npos);
    CHECK(msg.find("decoder.spam.codebook.codes") != std::string::npos);
    CHECK(msg.find("head.offset.weight") != std::string::npos);
  }
}

TEST_CASE("adam matches a hand-computed step") {
  Var<float> w(Tensor<float>({2}, std::vector<float>{1.0f, -2.0f}), true);
  Adam adam({{"w", &w}}, {0.1, 0.9, 0.999, 1e-8, 0.0});
  w.grad_buffer() = Tensor<float>({2}, std::vector<float>{0.5f, -3.0f});
  adam.step();
  // First bias-corrected step moves each weight by lr * sign(g).
  CHECK(w.value()[0] == doctest::Approx(0.9f).epsilon(1e-6));
  CHECK(w.value()[1] == doctest::Approx(-1.9f).epsilon(1e-6));
  const auto state = adam.state();
  REQUIRE(state.size() == 2);
  Adam other({{"w", &w}}, {});
  other.load_state(state, adam.steps());
  CHECK(other.state() == state);
  CHECK_THROWS(other.load_state({}, 1));
}

TEST_CASE("training lowers the loss and is reproducible") {
  testutil::TempDir a("train_a"), b("train_b");
  RunConfig cfg = small_run(a.path(), 150);
  TrainOptions opts;
  opts.skip_validation = true;
  const auto s1 = train_model(cfg, opts);
  cfg.train.out_dir = b.path().string();
  const auto s2 = train_model(cfg, opts);
  REQUIRE(s1.steps.size() == 150);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 10; ++i) {
    first += s1.steps[static_cast<size_t>(i)].loss;
    last += s1.steps[s1.steps.size() - 1 - static_cast<size_t>(i)].loss;
  }
  CHECK(last < first);
  for (size_t i = 0; i < s1.steps.size(); ++i) CHECK(s1.steps[i].loss == s2.steps[i].loss);
  // The embedded configs differ only in out_dir.
  const Checkpoint ca = load_checkpoint(a / "last.ckpt"), cb = load_checkpoint(b / "last.ckpt");
  CHECK(ca.entries == cb.entries);
  CHECK(ca.optimizer == cb.optimizer);
  CHECK(std::filesystem::exists(a / "epoch_0001.ckpt"));
  const std::string log = read_file(a / "train.log");
  CHECK(log.find("step=1 loss=") != std::string::npos);
  CHECK(log.find("matches=") != std::string::npos);
  CHECK(log.find("epoch=1 val_mae=") != std::string::npos);
}

TEST_CASE("resuming continues the same trajectory") {
  testutil::TempDir full("resume_full"), part("resume_part");
  TrainOptions opts;
  opts.skip_validation = true;
  RunConfig cfg = small_run(full.path(), 10);
  cfg.train.epochs = 2;
  const auto straight = train_model(cfg, opts);

  cfg.train.out_dir = part.path().string();
  cfg.train.epochs = 1;
  train_model(cfg, opts);
  cfg.train.epochs = 2;
  cfg.train.resume = (part / "epoch_0001.ckpt").string();
  const auto resumed = train_model(cfg, opts);
  REQUIRE(resumed.steps.size() == 10);
  for (size_t i = 0; i < 10; ++i) CHECK(resumed.steps[i].loss == straight.steps[10 + i].loss);

  cfg.train.resume = (part / "nope.ckpt").string();
  CHECK_THROWS_WITH(train_model(cfg, opts), doctest::Contains("nope.ckpt"));
}

TEST_CASE("infer, eval, fuse and render") {
  const auto& ckpt = trained_checkpoint();
  testutil::TempDir dir("commands");
  const RunConfig cfg = small_run(dir.path(), 1);
  const auto scenes = load_split("synthetic", cfg);
  save_image(dir / "scene.png", scenes[0].image);
  std::ostringstream log;

  SUBCASE("tau = 1 predicts nothing and the JSON lists points") {
    CHECK(run_infer(ckpt, dir / "scene.png", 1.0, dir / "none.json", log).empty());
    CHECK(nlohmann::json::parse(read_file(dir / "none.json")).empty());
    const auto pts = run_infer(ckpt, dir / "scene.png", 0.0, dir / "all.json", log);
    const auto j = nlohmann::json::parse(read_file(dir / "all.json"));
    REQUIRE(j.size() == pts.size());
    CHECK(j[0].contains("x"));
    CHECK(j[0].contains("y"));
    CHECK(j[0].contains("score"));
  }
  SUBCASE("fusion keeps predictions and refuses to run twice") {
    run_fuse(ckpt, dir / "fused.ckpt", log);
    CHECK_THROWS_WITH(run_fuse(dir / "fused.ckpt", dir / "again.ckpt", log), doctest::Contains("already fused"));
    const auto a = run_infer(ckpt, dir / "scene.png", 0.0, std::nullopt, log);
    const auto b = run_infer(dir / "fused.ckpt", dir / "scene.png", 0.0, std::nullopt, log);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(std::abs(a[i].x - b[i].x) <= 1e-4);
      CHECK(std::abs(a[i].y - b[i].y) <= 1e-4);
    }
    CHECK(load_model(dir / "fused.ckpt").net->parameter_count() < load_model(ckpt).net->parameter_count());
  }
  SUBCASE("eval writes both reports") {
    const auto r = run_eval(ckpt, "synthetic", std::nullopt, 4.0, dir / "report", log);
    CHECK(r.counting.per_scene.size() == 3);
    const auto j = nlohmann::json::parse(read_file(dir / "report" / "metrics.json"));
    CHECK(j["tp"] == r.localization.tp);
    CHECK(read_file(dir / "report" / "metrics.txt").find("mae = ") != std::string::npos);
    testutil::TempDir empty("empty_data");
    CHECK_THROWS(run_eval(ckpt, empty.path(), std::nullopt, std::nullopt, std::nullopt, log));
  }
  SUBCASE("render is deterministic and draws nothing at tau = 1") {
    CHECK(run_render(ckpt, dir / "scene.png", dir / "r0.png", 1.0, log) == 0);
    const auto plain = render_overlay(load_image(dir / "scene.png"), std::vector<ScoredPoint>{});
    const auto drawn = load_image(dir / "r0.png");
    CHECK(drawn == plain);
    run_render(ckpt, dir / "scene.png", dir / "r1.png", 0.5, log);
    run_render(ckpt, dir / "scene.png", dir / "r2.png", 0.5, log);
    CHECK(read_file(dir / "r1.png") == read_file(dir / "r2.png"));
    CHECK_THROWS(run_render(ckpt, dir / "scene.png", dir / "no_such_dir" / "x.png", 0.5, log));
  }
  SUBCASE("checkpoints from another architecture are refused by name") {
    Checkpoint c = load_checkpoint(ckpt);
    c.entries.erase(c.entries.begin());
    save_checkpoint(dir / "broken.ckpt", c);
    CHECK_THROWS_WITH(run_infer(dir / "broken.ckpt", dir / "scene.png", 0.5, std::nullopt, log),
                      doctest::Contains("missing ["));
  }
}

TEST_CASE("markers in a render match the prediction count") {
  Tensor<float> img({3, 64, 64}, 0.0f);
  const std::vector<ScoredPoint> pts{{10, 40, 0.9}, {40, 50, 0.8}, {55, 30, 0.7}};
  const auto out = render_overlay(img, pts);
  for (const auto& p : pts) {
    const auto x = static_cast<int64_t>(p.x), y = static_cast<int64_t>(p.y);
    CHECK(out.at(0, y, x) == doctest::Approx(1.0f));
    CHECK(out.at(1, y, x) == doctest::Approx(0.0f));
  }
  // Marker pixels are pure red; count connected blobs away from the label.
  int64_t red = 0;
  for (int64_t y = 20; y < 64; ++y)
    for (int64_t x = 0; x < 64; ++x)
      if (out.at(0, y, x) > 0.5f && out.at(1, y, x) < 0.5f) ++red;
  CHECK(red > 0);
  CHECK(red <= static_cast<int64_t>(pts.size()) * 25);
}

TEST_CASE("profile counts and the hw option") {
  testutil::TempDir dir("profile");
  write_file(dir / "tiny.cfg", "model.backbone = tiny\ndecoder.width = 16\nspam.codebook_size = 8\n");
  std::ostringstream log;
  const auto unfused = run_profile(dir / "tiny.cfg", 64, 64, 2, 1, false, log);
  const auto fused = run_profile(dir / "tiny.cfg", 64, 64, 0, 0, true, log);
  CHECK(fused.total_params < unfused.total_params);
  CHECK(unfused.encoder_params + unfused.decoder_params == unfused.total_params);
  CHECK(unfused.macs > 0);
  CHECK(unfused.mean_ms > 0.0);
  CHECK(log.str().find("reference_params = 2515008") != std::string::npos);
  CHECK(parse_hw("96,64") == std::pair<int64_t, int64_t>{96, 64});
  CHECK(parse_hw("128") == std::pair<int64_t, int64_t>{128, 128});
  CHECK_THROWS(parse_hw("12x5"));
  CHECK_THROWS(run_profile(dir / "tiny.cfg", 65, 64, 0, 0, false, log));
}
