#include "msan/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace msan {

using nlohmann::json;

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Generator

namespace {

std::vector<double> topic_prototype(const GeneratorConfig& cfg, int topic) {
  Rng rng = Rng::derive(cfg.seed, "topic-proto", static_cast<uint64_t>(topic));
  std::vector<double> proto(cfg.feature_dim);
  for (double& v : proto) v = rng.normal(0.0, 1.0);
  return proto;
}

int draw_level(Rng& rng, double pos, bool allow_level1) {
  // level-4 mass grows toward the end of the video
  double w1 = allow_level1 ? std::max(0.05, 1.2 - 1.0 * pos) : 0.0;
  double w2 = 1.0 - 0.4 * pos;
  double w3 = 0.8 + 0.2 * pos;
  double w4 = 0.5 + 1.6 * pos;
  double u = rng.uniform() * (w1 + w2 + w3 + w4);
  if (u < w1) return 1;
  if (u < w1 + w2) return 2;
  if (u < w1 + w2 + w3) return 3;
  return 4;
}

}  // namespace

Instance generate_instance(const GeneratorConfig& cfg, int index, bool with_annotations) {
  if (cfg.feature_dim < 4) throw ValidationError("generator: feature_dim must be >= 4");
  if (cfg.topic_count < 1) throw ValidationError("generator: topic_count must be >= 1");
  Rng rng = Rng::derive(cfg.seed, "instance", static_cast<uint64_t>(index));

  int m = 0;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    m = std::max(2, rng.poisson(cfg.mean_segments));
    if (cfg.max_segments <= 0 || m <= cfg.max_segments) break;
    m = cfg.max_segments;
  }

  const double sigma = 0.45;
  const double mu = std::log(cfg.mean_segment_duration_s) - 0.5 * sigma * sigma;
  const double label_rate = cfg.mean_labels_per_video / cfg.mean_segments;

  std::vector<std::vector<double>> protos;
  for (int t = 0; t < cfg.topic_count; ++t) protos.push_back(topic_prototype(cfg, t));

  Instance inst;
  char idbuf[64];
  std::snprintf(idbuf, sizeof(idbuf), "syn-%llu-%05d", static_cast<unsigned long long>(cfg.seed), index);
  inst.id = idbuf;
  inst.force_end_segment = true;

  std::vector<int> topic(m);
  topic[0] = rng.uniform_int(0, cfg.topic_count - 1);
  for (int i = 1; i < m; ++i) {
    topic[i] = rng.uniform() < 0.5 ? topic[i - 1] : rng.uniform_int(0, cfg.topic_count - 1);
  }

  for (int i = 0; i < m; ++i) {
    Segment seg;
    seg.index = i;
    seg.duration_s = rng.lognormal(mu, sigma);
    const double pos = m > 1 ? static_cast<double>(i) / (m - 1) : 1.0;
    const bool last = i == m - 1;

    int nlabels = rng.poisson(label_rate);
    for (int l = 0; l < nlabels; ++l) {
      ImportanceLabel lab;
      lab.level = draw_level(rng, pos, /*allow_level1=*/!last);
      if (cfg.weight_scheme == WeightScheme::kFourthPower) {
        lab.group_weight = std::pow(lab.level / 4.0, 4.0);
      }
      seg.labels.push_back(lab);
    }
    if (last) {
      bool has4 = false;
      for (const ImportanceLabel& l : seg.labels) has4 |= l.level == 4;
      if (!has4) {
        ImportanceLabel lab;
        lab.level = 4;
        if (cfg.weight_scheme == WeightScheme::kFourthPower) lab.group_weight = 1.0;
        seg.labels.push_back(lab);
      }
    }

    double mean_level = 0.0;
    for (const ImportanceLabel& l : seg.labels) mean_level += l.level;
    if (!seg.labels.empty()) mean_level /= static_cast<double>(seg.labels.size());

    seg.features.resize(cfg.feature_dim);
    for (int d = 0; d < cfg.feature_dim; ++d) {
      seg.features[d] = 0.8 * protos[topic[i]][d] + rng.normal(0.0, 0.3);
    }
    // low dims carry the signals the reward actually depends on
    seg.features[0] = pos;
    seg.features[1] = mean_level / 4.0;
    seg.features[2] = seg.duration_s / 5.0;
    seg.features[3] = last ? 1.0 : 0.0;

    seg.text = "topic-" + std::to_string(topic[i]) + " segment-" + std::to_string(i);
    inst.segments.push_back(std::move(seg));
  }

  const double hi_upper = std::max(4.0, cfg.ppl_high * 1.6);
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      double u = rng.uniform();
      double v;
      if (u < 0.36) {
        v = rng.uniform(0.0, cfg.ppl_low);
      } else if (u < 0.85) {
        v = rng.uniform(cfg.ppl_high, hi_upper);
      } else {
        v = rng.uniform(cfg.ppl_low, cfg.ppl_high);
      }
      if (j == i + 1 && topic[i] == topic[j]) v *= 0.25;  // adjacent same-topic reads coherent
      inst.ppl.set(i, j, v);
    }
  }

  if (with_annotations) {
    CoherenceAnnotation ann;
    for (const auto& [key, v] : inst.ppl.entries()) {
      CohLabel label = v < cfg.ppl_low    ? CohLabel::kCoherent
                       : v > cfg.ppl_high ? CohLabel::kIncoherent
                                          : CohLabel::kUncertain;
      ann.set(key.first, key.second, label);
    }
    inst.annotations = std::move(ann);
  }

  inst.validate();
  return inst;
}

Dataset generate(const GeneratorConfig& cfg) {
  if (cfg.count < 1) throw ValidationError("generator: count must be >= 1");
  if (cfg.ppl_low < 0.0 || cfg.ppl_low >= cfg.ppl_high) {
    throw ValidationError("generator: requires 0 <= ppl_low < ppl_high");
  }
  Dataset ds;
  const int n_test = static_cast<int>(std::lround(cfg.count * cfg.test_fraction));
  const int n_train = cfg.count - n_test;
  for (int i = 0; i < cfg.count; ++i) {
    const bool is_test = i >= n_train;
    Instance inst = generate_instance(cfg, i, is_test);
    (is_test ? ds.test : ds.train).push_back(std::move(inst));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Instance files

namespace {

const char* coh_label_name(CohLabel l) {
  switch (l) {
    case CohLabel::kCoherent: return "coherent";
    case CohLabel::kUncertain: return "uncertain";
    case CohLabel::kIncoherent: return "incoherent";
  }
  return "uncertain";
}

CohLabel coh_label_from(const std::string& s, const std::string& path) {
  if (s == "coherent") return CohLabel::kCoherent;
  if (s == "uncertain") return CohLabel::kUncertain;
  if (s == "incoherent") return CohLabel::kIncoherent;
  throw ValidationError(path + ": unknown coherence class '" + s + "'");
}

}  // namespace

json instance_to_json(const Instance& inst) {
  json j;
  j["schema_version"] = 1;
  j["id"] = inst.id;
  j["force_end_segment"] = inst.force_end_segment;
  json segs = json::array();
  for (const Segment& s : inst.segments) {
    json js;
    js["index"] = s.index;
    js["duration_s"] = s.duration_s;
    js["features"] = s.features;
    json labels = json::array();
    for (const ImportanceLabel& l : s.labels) {
      json jl;
      jl["level"] = l.level;
      if (l.group_weight) jl["group_weight"] = *l.group_weight;
      labels.push_back(jl);
    }
    js["labels"] = labels;
    if (s.text) js["text"] = *s.text;
    segs.push_back(js);
  }
  j["segments"] = segs;
  json ppl = json::array();
  for (const auto& [key, v] : inst.ppl.entries()) ppl.push_back({key.first, key.second, v});
  j["ppl"] = ppl;
  if (inst.annotations) {
    json ann = json::array();
    for (const auto& [key, label] : inst.annotations->entries()) {
      ann.push_back({key.first, key.second, coh_label_name(label)});
    }
    j["annotations"] = ann;
  }
  return j;
}

void save_instance(const Instance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write instance file '" + path + "'");
  out << instance_to_json(inst).dump(1) << "\n";
}

Instance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instance file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  try {
    if (j.value("schema_version", 0) != 1) {
      throw ValidationError(path + ": unsupported schema_version");
    }
    Instance inst;
    inst.id = j.at("id").get<std::string>();
    inst.force_end_segment = j.value("force_end_segment", true);
    for (const json& js : j.at("segments")) {
      Segment s;
      s.index = js.at("index").get<int>();
      s.duration_s = js.at("duration_s").get<double>();
      s.features = js.at("features").get<std::vector<double>>();
      if (js.contains("labels")) {
        for (const json& jl : js.at("labels")) {
          ImportanceLabel l;
          l.level = jl.at("level").get<int>();
          if (jl.contains("group_weight")) l.group_weight = jl.at("group_weight").get<double>();
          s.labels.push_back(l);
        }
      }
      if (js.contains("text")) s.text = js.at("text").get<std::string>();
      inst.segments.push_back(std::move(s));
    }
    for (const json& entry : j.value("ppl", json::array())) {
      inst.ppl.set(entry.at(0).get<int>(), entry.at(1).get<int>(), entry.at(2).get<double>());
    }
    if (j.contains("annotations")) {
      CoherenceAnnotation ann;
      for (const json& entry : j.at("annotations")) {
        ann.set(entry.at(0).get<int>(), entry.at(1).get<int>(),
                coh_label_from(entry.at(2).get<std::string>(), path));
      }
      inst.annotations = std::move(ann);
    }
    inst.validate();
    return inst;
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "instances");
  json manifest;
  manifest["schema_version"] = 1;
  json list = json::array();
  auto dump_split = [&](const std::vector<Instance>& split, const char* tag) {
    for (const Instance& inst : split) {
      std::string rel = "instances/" + inst.id + ".json";
      save_instance(inst, (fs::path(dir) / rel).string());
      list.push_back({{"path", rel}, {"split", tag}});
    }
  };
  dump_split(ds.train, "train");
  dump_split(ds.test, "test");
  manifest["instances"] = list;
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in '" + dir + "'");
  out << manifest.dump(1) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw std::runtime_error("no manifest.json in '" + dir + "'");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ValidationError(dir + "/manifest.json: " + e.what());
  }
  Dataset ds;
  for (const json& entry : manifest.at("instances")) {
    Instance inst = load_instance((fs::path(dir) / entry.at("path").get<std::string>()).string());
    const std::string split = entry.at("split").get<std::string>();
    (split == "test" ? ds.test : ds.train).push_back(std::move(inst));
  }
  return ds;
}

}  // namespace msan
