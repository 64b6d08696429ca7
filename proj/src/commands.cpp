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

#include "crowdpoint/commands.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <stdexcept>

#include "crowdpoint/image_io.hpp"
#include "crowdpoint/trainer.hpp"

namespace crowdpoint {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

double check_tau(double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("--tau must lie in [0, 1]");
  return tau;
}

}  // namespace

void run_train(const std::filesystem::path& config, std::ostream& out) {
  const RunConfig cfg = load_config(config);
  TrainOptions opts;
  opts.on_line = [&out](const std::string& line) { out << line << '\n' << std::flush; };
  const TrainSummary s = train_model(cfg, opts);
  out << "checkpoint = " << s.last_checkpoint.string() << '\n';
}

std::string predictions_json(const std::vector<ScoredPoint>& points) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& p : points) arr.push_back({{"x", p.x}, {"y", p.y}, {"score", p.score}});
  return arr.dump(2) + "\n";
}

std::vector<ScoredPoint> run_infer(const std::filesystem::path& ckpt, const std::filesystem::path& image,
                                   std::optional<double> tau, const std::optional<std::filesystem::path>& json_out,
                                   std::ostream& out) {
  LoadedModel m = load_model(ckpt);
  const Tensor<float> img = load_image(image);
  const auto points = predict_points(*m.net, img, check_tau(tau.value_or(m.config.tau)));
  if (json_out) write_text(*json_out, predictions_json(points));
  out << "count = " << points.size() << '\n';
  return points;
}

MetricsReport run_eval(const std::filesystem::path& ckpt, const std::filesystem::path& data, std::optional<double> tau,
                       std::optional<double> delta, const std::optional<std::filesystem::path>& out_dir,
                       std::ostream& out) {
  LoadedModel m = load_model(ckpt);
  const double d = delta.value_or(m.config.delta);
  if (!(d > 0.0)) throw std::invalid_argument("--delta must be positive");
  const auto scenes = data == "synthetic" ? load_split("synthetic", m.config) : load_annotations(data);
  if (scenes.empty()) throw std::runtime_error("eval: empty dataset " + data.string());
  const MetricsReport r = evaluate_scenes(*m.net, scenes, check_tau(tau.value_or(m.config.tau)), d);
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_text(*out_dir / "metrics.json", metrics_json(r));
    write_text(*out_dir / "metrics.txt", metrics_text(r));
  }
  out << metrics_json(r);
  return r;
}

void run_fuse(const std::filesystem::path& in, const std::filesystem::path& out_path, std::ostream& out) {
  LoadedModel m = load_model(in);
  if (m.checkpoint.fused) throw std::runtime_error("fuse: " + in.string() + " is already fused");
  const int64_t before = m.net->parameter_count();
  m.net->fuse();
  Checkpoint c = snapshot_checkpoint(*m.net, m.config, nullptr, m.checkpoint.epoch, m.checkpoint.step);
  save_checkpoint(out_path, c);
  out << "params_before = " << before << "\nparams_after = " << m.net->parameter_count() << "\nwritten = "
      << out_path.string() << '\n';
}

ProfileReport run_profile(const std::filesystem::path& config, int64_t height, int64_t width, int runs, int warmup,
                          bool fused, std::ostream& out) {
  const RunConfig cfg = load_config(config);
  Network<float> net(cfg.model, cfg.train.seed);
  if (fused) net.fuse();
  const ProfileReport r = profile_network(net, height, width, runs, warmup);
  out << format_profile(r);
  return r;
}

size_t run_render(const std::filesystem::path& ckpt, const std::filesystem::path& image,
                  const std::filesystem::path& out_path, std::optional<double> tau, std::ostream& out) {
  LoadedModel m = load_model(ckpt);
  const Tensor<float> img = load_image(image);
  const auto points = predict_points(*m.net, img, check_tau(tau.value_or(m.config.tau)));
  save_image(out_path, render_overlay(img, points));
  out << "count = " << points.size() << "\nwritten = " << out_path.string() << '\n';
  return points.size();
}

std::pair<int64_t, int64_t> parse_hw(const std::string& text) {
  const auto parse = [&](const std::string& s) {
    size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size() || v <= 0) throw std::invalid_argument("--hw: expected H,W, got '" + text + "'");
    return static_cast<int64_t>(v);
  };
  const auto comma = text.find(',');
  if (comma == std::string::npos) {
    const int64_t s = parse(text);
    return {s, s};
  }
  return {parse(text.substr(0, comma)), parse(text.substr(comma + 1))};
}

}  // namespace crowdpoint
