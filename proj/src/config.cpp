/* Copyright 2026 The Knowe Lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "knowe/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "knowe/errors.hpp"

namespace knowe {
namespace {

using nlohmann::json;

// Walks the source text to the line of a key path. Good enough for anchoring
// messages; falls back to the last line it managed to reach.
std::size_t locate(const std::string& text, const std::vector<std::string>& path) {
  std::size_t pos = 0;
  for (const std::string& key : path) {
    const std::string quoted = "\"" + key + "\"";
    std::size_t at = pos;
    while (true) {
      at = text.find(quoted, at);
      if (at == std::string::npos) break;
      std::size_t after = at + quoted.size();
      while (after < text.size() && std::isspace(static_cast<unsigned char>(text[after]))) ++after;
      if (after < text.size() && text[after] == ':') break;
      at += quoted.size();
    }
    if (at == std::string::npos) break;
    pos = at;
  }
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + pos, '\n'));
}

class Reader {
 public:
  Reader(const std::string& text, std::string origin) : text_(text), origin_(std::move(origin)) {}

  [[noreturn]] void fail(const std::vector<std::string>& path, const std::string& what) const {
    std::string dotted;
    for (const auto& k : path) dotted += (dotted.empty() ? "" : ".") + k;
    throw ConfigError(origin_ + ":" + std::to_string(locate(text_, path)) + ": " +
                      (dotted.empty() ? "" : "'" + dotted + "': ") + what);
  }

  void object(const json& j, const std::vector<std::string>& path,
              std::initializer_list<const char*> allowed) const {
    if (!j.is_object()) fail(path, "expected an object");
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& item : j.items()) {
      if (!keys.contains(item.key())) {
        auto p = path;
        p.push_back(item.key());
        fail(p, "unknown key");
      }
    }
  }

  std::size_t count(const json& j, const std::vector<std::string>& path, std::size_t min) const {
    if (!j.is_number_unsigned()) fail(path, "expected a non-negative integer");
    const auto v = j.get<std::uint64_t>();
    if (v < min) fail(path, "must be at least " + std::to_string(min));
    return static_cast<std::size_t>(v);
  }

  double number(const json& j, const std::vector<std::string>& path) const {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
  }

  double positive(const json& j, const std::vector<std::string>& path) const {
    const double v = number(j, path);
    if (!(v > 0.0)) fail(path, "must be positive");
    return v;
  }

  double non_negative(const json& j, const std::vector<std::string>& path) const {
    const double v = number(j, path);
    if (!(v >= 0.0)) fail(path, "must be non-negative");
    return v;
  }

  bool boolean(const json& j, const std::vector<std::string>& path) const {
    if (!j.is_boolean()) fail(path, "expected true or false");
    return j.get<bool>();
  }

  std::string string(const json& j, const std::vector<std::string>& path) const {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
  }

 private:
  const std::string& text_;
  std::string origin_;
};

std::vector<std::string> child(std::vector<std::string> path, const std::string& key) {
  path.push_back(key);
  return path;
}

void read_optim(const Reader& r, const json& j, const std::vector<std::string>& path,
                OptimConfig& opt) {
  r.object(j, path, {"lr", "momentum", "weight_decay", "batch_size", "epochs", "tau", "clip_norm"});
  if (j.contains("lr")) opt.lr = r.positive(j["lr"], child(path, "lr"));
  if (j.contains("momentum")) {
    opt.momentum = r.non_negative(j["momentum"], child(path, "momentum"));
    if (opt.momentum >= 1.0) r.fail(child(path, "momentum"), "must be below 1");
  }
  if (j.contains("weight_decay")) opt.weight_decay = r.non_negative(j["weight_decay"], child(path, "weight_decay"));
  if (j.contains("batch_size")) opt.batch_size = r.count(j["batch_size"], child(path, "batch_size"), 2);
  if (j.contains("epochs")) opt.epochs = r.count(j["epochs"], child(path, "epochs"), 0);
  if (j.contains("tau")) opt.tau = r.positive(j["tau"], child(path, "tau"));
  if (j.contains("clip_norm")) opt.clip_norm = r.non_negative(j["clip_norm"], child(path, "clip_norm"));
}

void read_flags(const Reader& r, const json& j, RunFlags& flags) {
  const std::vector<std::string> path{"flags"};
  r.object(j, path, {"contrastive_base", "freeze_embedding", "normalize_weights",
                     "freeze_classifier", "mode"});
  if (j.contains("contrastive_base")) flags.contrastive_base = r.boolean(j["contrastive_base"], child(path, "contrastive_base"));
  if (j.contains("freeze_embedding")) flags.freeze_embedding = r.boolean(j["freeze_embedding"], child(path, "freeze_embedding"));
  if (j.contains("normalize_weights")) flags.normalize_weights = r.boolean(j["normalize_weights"], child(path, "normalize_weights"));
  if (j.contains("freeze_classifier")) flags.freeze_classifier = r.boolean(j["freeze_classifier"], child(path, "freeze_classifier"));
  if (j.contains("mode")) {
    const std::string mode = r.string(j["mode"], child(path, "mode"));
    try {
      flags.mode = run_mode_from_string(mode);
    } catch (const ConfigError& e) {
      r.fail(child(path, "mode"), e.what());
    }
  }
}

void read_training(const Reader& r, const json& j, TrainingPreset& t) {
  const std::vector<std::string> path{"training"};
  r.object(j, path, {"temperature", "view_sigma", "contrastive_weight", "net", "base", "session"});
  if (j.contains("temperature")) t.temperature = r.positive(j["temperature"], child(path, "temperature"));
  if (j.contains("view_sigma")) t.view_sigma = r.non_negative(j["view_sigma"], child(path, "view_sigma"));
  if (j.contains("contrastive_weight")) t.contrastive_weight = r.non_negative(j["contrastive_weight"], child(path, "contrastive_weight"));
  if (j.contains("net")) {
    const auto np = child(path, "net");
    const json& n = j["net"];
    r.object(n, np, {"hidden", "feature_dim", "projection_hidden", "projection_dim"});
    if (n.contains("hidden")) {
      const auto hp = child(np, "hidden");
      if (!n["hidden"].is_array()) r.fail(hp, "expected an array of layer widths");
      t.net.hidden.clear();
      for (const json& w : n["hidden"]) t.net.hidden.push_back(r.count(w, hp, 1));
    }
    if (n.contains("feature_dim")) t.net.feature_dim = r.count(n["feature_dim"], child(np, "feature_dim"), 1);
    if (n.contains("projection_hidden")) t.net.projection_hidden = r.count(n["projection_hidden"], child(np, "projection_hidden"), 1);
    if (n.contains("projection_dim")) t.net.projection_dim = r.count(n["projection_dim"], child(np, "projection_dim"), 1);
  }
  if (j.contains("base")) read_optim(r, j["base"], child(path, "base"), t.base);
  if (j.contains("session")) read_optim(r, j["session"], child(path, "session"), t.session);
}

void read_dataset(const Reader& r, const json& j, DatasetSpec& d) {
  const std::vector<std::string> path{"dataset"};
  r.object(j, path, {"feature_file", "coarse", "fine_per_coarse", "synthetic"});
  if (j.contains("feature_file")) d.feature_file = r.string(j["feature_file"], child(path, "feature_file"));
  if (j.contains("coarse")) d.coarse = r.count(j["coarse"], child(path, "coarse"), 2);
  if (j.contains("fine_per_coarse")) d.fine_per_coarse = r.count(j["fine_per_coarse"], child(path, "fine_per_coarse"), 2);
  if (j.contains("synthetic")) {
    const auto sp = child(path, "synthetic");
    const json& s = j["synthetic"];
    r.object(s, sp, {"input_dim", "coarse_sep", "fine_sep", "noise_sigma", "n_per_fine"});
    if (s.contains("input_dim")) d.synthetic.input_dim = r.count(s["input_dim"], child(sp, "input_dim"), 1);
    if (s.contains("coarse_sep")) d.synthetic.coarse_sep = r.positive(s["coarse_sep"], child(sp, "coarse_sep"));
    if (s.contains("fine_sep")) d.synthetic.fine_sep = r.positive(s["fine_sep"], child(sp, "fine_sep"));
    if (s.contains("noise_sigma")) d.synthetic.noise_sigma = r.non_negative(s["noise_sigma"], child(sp, "noise_sigma"));
    if (s.contains("n_per_fine")) d.synthetic.n_per_fine = r.count(s["n_per_fine"], child(sp, "n_per_fine"), 1);
  }
}

void read_stream(const Reader& r, const json& j, StreamShape& s) {
  const std::vector<std::string> path{"stream"};
  r.object(j, path, {"way", "shots", "queries_per_class", "sessions", "probe_count"});
  if (j.contains("way")) s.way = r.count(j["way"], child(path, "way"), 1);
  if (j.contains("shots")) s.shots = r.count(j["shots"], child(path, "shots"), 1);
  if (j.contains("queries_per_class")) s.queries_per_class = r.count(j["queries_per_class"], child(path, "queries_per_class"), 1);
  if (j.contains("sessions")) s.sessions = r.count(j["sessions"], child(path, "sessions"), 1);
  if (j.contains("probe_count")) s.probe_count = r.count(j["probe_count"], child(path, "probe_count"), 0);
}

void read_analysis(const Reader& r, const json& j, AnalysisSpec& a) {
  const std::vector<std::string> path{"analysis"};
  r.object(j, path, {"seeds", "epsilon", "plasticity_trials", "plasticity_lr", "stability_t"});
  if (j.contains("seeds")) {
    const auto sp = child(path, "seeds");
    if (!j["seeds"].is_array() || j["seeds"].empty()) r.fail(sp, "expected a non-empty array of seeds");
    a.seeds.clear();
    for (const json& s : j["seeds"]) {
      if (!s.is_number_unsigned()) r.fail(sp, "seeds must be non-negative integers");
      a.seeds.push_back(s.get<std::uint64_t>());
    }
  }
  if (j.contains("epsilon")) a.epsilon = r.positive(j["epsilon"], child(path, "epsilon"));
  if (j.contains("plasticity_trials")) a.plasticity_trials = r.count(j["plasticity_trials"], child(path, "plasticity_trials"), 1);
  if (j.contains("plasticity_lr")) a.plasticity_lr = r.positive(j["plasticity_lr"], child(path, "plasticity_lr"));
  if (j.contains("stability_t")) a.stability_t = r.count(j["stability_t"], child(path, "stability_t"), 1);
}

// Cross-field checks that need the whole config.
void check(const Reader& r, const RunConfig& c) {
  if (!c.dataset.feature_file) {
    const std::size_t fine = c.dataset.coarse * c.dataset.fine_per_coarse;
    if (c.stream.way * c.stream.sessions > fine) {
      r.fail({"stream", "sessions"}, "way * sessions = " + std::to_string(c.stream.way * c.stream.sessions) +
                                         " exceeds the " + std::to_string(fine) + " fine classes");
    }
  }
  if (c.analysis.stability_t >= c.stream.sessions) {
    r.fail({"analysis", "stability_t"}, "must be below stream.sessions (" + std::to_string(c.stream.sessions) + ")");
  }
}

RunConfig finish(const std::string& text, const std::string& origin, const json& root,
                 const ConfigOverrides& overrides) {
  const Reader r(text, origin);
  r.object(root, {}, {"preset", "seed", "out", "dataset", "stream", "flags", "training", "analysis"});

  RunConfig c;
  if (root.contains("preset")) c.preset = r.string(root["preset"], {"preset"});
  if (overrides.preset) c.preset = *overrides.preset;
  try {
    c.training = preset_by_name(c.preset);
  } catch (const ConfigError& e) {
    if (overrides.preset) throw ConfigError(std::string("--preset: ") + e.what());
    r.fail({"preset"}, e.what());
  }

  if (root.contains("seed")) {
    if (!root["seed"].is_number_unsigned()) r.fail({"seed"}, "expected a non-negative integer");
    c.seed = root["seed"].get<std::uint64_t>();
  }
  if (root.contains("out")) c.out = r.string(root["out"], {"out"});
  if (root.contains("dataset")) read_dataset(r, root["dataset"], c.dataset);
  if (root.contains("stream")) read_stream(r, root["stream"], c.stream);
  if (root.contains("flags")) read_flags(r, root["flags"], c.flags);
  if (root.contains("training")) read_training(r, root["training"], c.training);
  if (root.contains("analysis")) read_analysis(r, root["analysis"], c.analysis);

  if (overrides.seed) c.seed = *overrides.seed;
  if (overrides.out) c.out = *overrides.out;
  if (overrides.flags) {
    try {
      apply_flag_overrides(c.flags, *overrides.flags);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("--flags: ") + e.what());
    }
  }
  check(r, c);
  return c;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + value + "'");
}

}  // namespace

void apply_flag_overrides(RunFlags& flags, const std::string& csv) {
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    if (key == "contrastive_base") flags.contrastive_base = parse_bool(key, value);
    else if (key == "freeze_embedding") flags.freeze_embedding = parse_bool(key, value);
    else if (key == "normalize_weights") flags.normalize_weights = parse_bool(key, value);
    else if (key == "freeze_classifier") flags.freeze_classifier = parse_bool(key, value);
    else if (key == "mode") flags.mode = run_mode_from_string(value);
    else throw ConfigError("unknown flag '" + key + "'");
  }
}

RunConfig parse_config(const std::string& text, const std::string& origin,
                       const ConfigOverrides& overrides) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports "... at line L, column C: ..."; lift the line to the front.
    const std::string msg = e.what();
    std::size_t line = 1;
    const auto at = msg.find("line ");
    if (at != std::string::npos) line = std::stoul(msg.substr(at + 5));
    throw ConfigError(origin + ":" + std::to_string(line) + ": invalid JSON: " + msg);
  }
  return finish(text, origin, root, overrides);
}

RunConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ":0: cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string(), overrides);
}

RunConfig default_config(const ConfigOverrides& overrides) {
  return parse_config("{}", "<defaults>", overrides);
}

SessionStream build_stream(const RunConfig& config, std::uint64_t seed) {
  if (config.dataset.feature_file) {
    const auto [h, ds] = load_feature_file(*config.dataset.feature_file);
    return make_session_stream(ds, h, config.stream, seed);
  }
  SyntheticSetup setup;
  setup.coarse = config.dataset.coarse;
  setup.fine_per_coarse = config.dataset.fine_per_coarse;
  setup.data = config.dataset.synthetic;
  setup.shape = config.stream;
  return make_synthetic_stream(setup, seed);
}

}  // namespace knowe
