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

#include "crowdpoint/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace crowdpoint {

namespace {

struct Field {
  std::string key;
  std::string description;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  throw std::invalid_argument("config field '" + key + "': invalid value '" + value + "' (expected " + expected + ")");
}

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename V>
V parse_number(const std::string& key, const std::string& s, const char* expected) {
  V v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) bad_value(key, s, expected);
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  bad_value(key, s, "true or false");
}

template <typename Access>
Field real(std::string key, std::string desc, Access access) {
  return {key, std::move(desc), [access](const RunConfig& c) { return fmt_double(access(c)); },
          [access, key](RunConfig& c, const std::string& s) { access(c) = parse_number<double>(key, s, "a number"); }};
}

template <typename Access>
Field integer(std::string key, std::string desc, Access access) {
  return {key, std::move(desc), [access](const RunConfig& c) { return std::to_string(access(c)); },
          [access, key](RunConfig& c, const std::string& s) {
            using V = std::remove_reference_t<decltype(access(c))>;
            access(c) = parse_number<V>(key, s, "an integer");
          }};
}

template <typename Access>
Field boolean(std::string key, std::string desc, Access access) {
  return {key, std::move(desc), [access](const RunConfig& c) { return std::string(access(c) ? "true" : "false"); },
          [access, key](RunConfig& c, const std::string& s) { access(c) = parse_bool(key, s); }};
}

template <typename Access>
Field text(std::string key, std::string desc, Access access) {
  return {key, std::move(desc), [access](const RunConfig& c) { return std::string(access(c)); },
          [access](RunConfig& c, const std::string& s) { access(c) = s; }};
}

template <typename Access, typename Parse>
Field choice(std::string key, std::string desc, Access access, Parse parse, std::string expected) {
  return {key, std::move(desc), [access](const RunConfig& c) { return to_string(access(c)); },
          [access, parse, key, expected](RunConfig& c, const std::string& s) {
            try {
              access(c) = parse(s);
            } catch (const std::invalid_argument&) {
              bad_value(key, s, expected);
            }
          }};
}

#define ACCESS(member) [](auto& c) -> auto& { return c.member; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      choice("model.backbone", "Encoder width: full (VGG16-bn front end) or tiny (quarter width)",
             ACCESS(model.backbone.variant), parse_backbone_variant, "full or tiny"),
      boolean("model.pretrained", "Initialize the encoder from model.pretrained_path", ACCESS(model.backbone.pretrained)),
      {"model.pretrained_path", "Checkpoint-format file with backbone.* entries; missing file warns and falls back",
       [](const RunConfig& c) { return c.model.backbone.pretrained_path.string(); },
       [](RunConfig& c, const std::string& s) { c.model.backbone.pretrained_path = s; }},
      integer("decoder.width", "Decoder channel count", ACCESS(model.decoder.width)),
      boolean("decoder.use_spam", "SPAM at stride 16 (false: conv3x3 + ReLU)", ACCESS(model.decoder.use_spam)),
      boolean("decoder.use_afam", "AFAM at strides 8 and 4 (false: conv3x3 + ReLU)", ACCESS(model.decoder.use_afam)),
      integer("spam.heads", "Attention heads; must divide decoder.width", ACCESS(model.spam.heads)),
      integer("spam.codebook_size", "Codebook entries K", ACCESS(model.spam.codebook_size)),
      choice("spam.fuse", "Branch fusion: sum or concat_project", ACCESS(model.spam.fuse), parse_spam_fuse,
             "sum or concat_project"),
      integer("spam.ff_expansion", "Feed-forward hidden width as a multiple of decoder.width",
              ACCESS(model.spam.ff_expansion)),
      integer("afam.reduction", "Channel-attention bottleneck ratio", ACCESS(model.afam.reduction)),
      integer("afam.kernel_a", "First multi-kernel convolution size (odd)", ACCESS(model.afam.kernel_a)),
      integer("afam.kernel_b", "Second multi-kernel convolution size (odd)", ACCESS(model.afam.kernel_b)),
      boolean("afam.split_channels", "Split channels between the RepConv and spatial paths",
              ACCESS(model.afam.split_channels)),
      real("loss.w_loc", "Weight of the squared-distance regression term", ACCESS(loss.w_loc)),
      real("loss.w_cost_loc", "Weight of the distance inside the matching cost", ACCESS(loss.w_cost_loc)),
      boolean("loss.cost_uses_score", "Subtract the confidence inside the matching cost", ACCESS(loss.cost_uses_score)),
      real("infer.tau", "Confidence threshold for predicted points", ACCESS(tau)),
      real("eval.delta", "Localization distance threshold in pixels", ACCESS(delta)),
      real("train.lr", "Adam learning rate", ACCESS(train.lr)),
      real("train.beta1", "Adam first-moment decay", ACCESS(train.beta1)),
      real("train.beta2", "Adam second-moment decay", ACCESS(train.beta2)),
      real("train.weight_decay", "L2 penalty added to the gradient", ACCESS(train.weight_decay)),
      real("train.adam_eps", "Adam denominator epsilon", ACCESS(train.adam_eps)),
      integer("train.batch_size", "Scenes per step, cropped to data.crop_size", ACCESS(train.batch_size)),
      integer("train.epochs", "Epochs; a checkpoint is written after each", ACCESS(train.epochs)),
      integer("train.steps_per_epoch", "Optimizer steps per epoch", ACCESS(train.steps_per_epoch)),
      integer("train.seed", "Seed for initialization, sampling and augmentation", ACCESS(train.seed)),
      text("train.resume", "Checkpoint to resume from (empty: fresh run)", ACCESS(train.resume)),
      text("train.out_dir", "Directory for checkpoints and train.log", ACCESS(train.out_dir)),
      text("data.train", "Training scenes: image directory with JSON sidecars, or synthetic", ACCESS(data.train)),
      text("data.val", "Validation scenes, same conventions (empty: training scenes)", ACCESS(data.val)),
      integer("data.crop_size", "Square training crop side", ACCESS(data.crop_size)),
      real("data.flip_probability", "Horizontal flip probability", ACCESS(data.flip_probability)),
      integer("synth.count", "Synthetic scene count", ACCESS(synth.count)),
      integer("synth.min_points", "Fewest points per synthetic scene", ACCESS(synth.min_points)),
      integer("synth.max_points", "Most points per synthetic scene", ACCESS(synth.max_points)),
      integer("synth.size", "Synthetic image side in pixels", ACCESS(synth.size)),
      integer("synth.seed", "Synthetic generator seed", ACCESS(synth.seed)),
  };
  return table;
}

#undef ACCESS

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::validate() const {
  const auto need = [](bool ok, const char* field, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config field '") + field + "': " + what);
  };
  need(model.decoder.width > 0, "decoder.width", "must be positive");
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  try {
    loss.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  need(tau >= 0.0 && tau <= 1.0, "infer.tau", "must lie in [0, 1]");
  need(delta > 0.0, "eval.delta", "must be positive");
  need(train.lr > 0.0, "train.lr", "must be positive");
  need(train.beta1 >= 0.0 && train.beta1 < 1.0, "train.beta1", "must lie in [0, 1)");
  need(train.beta2 >= 0.0 && train.beta2 < 1.0, "train.beta2", "must lie in [0, 1)");
  need(train.weight_decay >= 0.0, "train.weight_decay", "must be >= 0");
  need(train.adam_eps > 0.0, "train.adam_eps", "must be positive");
  need(train.batch_size > 0, "train.batch_size", "must be positive");
  need(train.epochs > 0, "train.epochs", "must be positive");
  need(train.steps_per_epoch > 0, "train.steps_per_epoch", "must be positive");
  need(!train.out_dir.empty(), "train.out_dir", "must not be empty");
  need(!data.train.empty(), "data.train", "must not be empty");
  need(data.crop_size > 0 && data.crop_size % kInputMultiple == 0, "data.crop_size",
       "must be a positive multiple of 32");
  need(data.flip_probability >= 0.0 && data.flip_probability <= 1.0, "data.flip_probability", "must lie in [0, 1]");
  need(synth.count > 0, "synth.count", "must be positive");
  need(synth.min_points >= 0, "synth.min_points", "must be >= 0");
  need(synth.max_points >= synth.min_points, "synth.max_points", "must be >= synth.min_points");
  need(synth.size >= data.crop_size, "synth.size", "must be >= data.crop_size");
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key.emplace(f.key, &f);
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(where + ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw std::invalid_argument(where + ": unknown config field '" + key + "'");
    if (const auto prev = seen.find(key); prev != seen.end()) {
      throw std::invalid_argument(where + ": config field '" + key + "' already set on line " +
                                  std::to_string(prev->second));
    }
    seen.emplace(key, lineno);
    try {
      it->second->set(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(source + ": " + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

std::vector<ConfigField> config_reference() {
  const RunConfig defaults;
  std::vector<ConfigField> out;
  for (const auto& f : fields()) out.push_back({f.key, f.get(defaults), f.description});
  return out;
}

std::string config_reference_markdown() {
  std::string out =
      "# Configuration reference\n\n"
      "Generated by `crowdpoint config-defaults`. Files are `key = value` lines; `#` starts a comment.\n"
      "Keys not listed in a file keep the defaults below.\n\n"
      "| key | default | description |\n|---|---|---|\n";
  for (const auto& f : config_reference()) {
    out += "| `" + f.key + "` | `" + (f.default_value.empty() ? std::string("\"\"") : f.default_value) + "` | " +
           f.description + " |\n";
  }
  return out;
}

}  // namespace crowdpoint
