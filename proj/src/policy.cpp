#include "msan/policy.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace msan {

using ad::Shape;
using ad::Tensor;
using nlohmann::json;

namespace {

std::vector<std::pair<std::string, Shape>> block_manifest(const PolicyConfig& cfg) {
  const int f = cfg.feature_dim;
  const int e = cfg.embed_dim;
  const int h = cfg.enc_hidden;
  const int d = cfg.dec_hidden();
  std::vector<std::pair<std::string, Shape>> m;
  m.push_back({"emb.W", Shape{{e, f}}});
  m.push_back({"emb.b", Shape{{e}}});
  for (int l = 0; l < cfg.enc_layers; ++l) {
    const int in = l == 0 ? e : 2 * h;
    for (const char* dir : {"fwd", "bwd"}) {
      std::string p = "enc.l" + std::to_string(l) + "." + dir + ".";
      for (const char* gate : {"z", "r", "n"}) {
        m.push_back({p + "W" + gate, Shape{{h, in}}});
        m.push_back({p + "U" + gate, Shape{{h, h}}});
        m.push_back({p + "b" + gate, Shape{{h}}});
      }
    }
  }
  for (const char* gate : {"z", "r", "n"}) {
    m.push_back({std::string("dec.W") + gate, Shape{{d, e}}});
    m.push_back({std::string("dec.U") + gate, Shape{{d, d}}});
    m.push_back({std::string("dec.b") + gate, Shape{{d}}});
  }
  m.push_back({"att1.W", Shape{{2 * h, d}}});
  m.push_back({"att2.W", Shape{{2 * h, 2 * d}}});
  m.push_back({"init.W", Shape{{d, 2 * h}}});
  m.push_back({"init.b", Shape{{d}}});
  return m;
}

}  // namespace

PolicyParams PolicyParams::init(const PolicyConfig& cfg, Rng& rng) {
  PolicyParams params;
  params.config = cfg;
  for (auto& [name, shape] : block_manifest(cfg)) {
    ParamBlock blk;
    blk.name = name;
    blk.shape = shape;
    blk.values.resize(shape.numel());
    if (shape.dims.size() == 2) {
      double r = 1.0 / std::sqrt(static_cast<double>(shape.dims[1]));
      for (double& v : blk.values) v = rng.uniform(-r, r);
    }
    // biases start at zero
    params.blocks.push_back(std::move(blk));
  }
  return params;
}

ParamBlock& PolicyParams::block(const std::string& name) {
  for (ParamBlock& b : blocks) {
    if (b.name == name) return b;
  }
  throw std::out_of_range("no parameter block named '" + name + "'");
}

const ParamBlock& PolicyParams::block(const std::string& name) const {
  return const_cast<PolicyParams*>(this)->block(name);
}

size_t PolicyParams::total_size() const {
  size_t n = 0;
  for (const ParamBlock& b : blocks) n += b.values.size();
  return n;
}

// ---------------------------------------------------------------------------
// Checkpoints

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

json config_to_json(const PolicyConfig& cfg) {
  return json{{"feature_dim", cfg.feature_dim},
              {"embed_dim", cfg.embed_dim},
              {"enc_hidden", cfg.enc_hidden},
              {"enc_layers", cfg.enc_layers},
              {"use_glimpse", cfg.use_glimpse},
              {"feasibility_mask", cfg.feasibility_mask}};
}

PolicyConfig config_from_json(const json& j) {
  PolicyConfig cfg;
  cfg.feature_dim = j.at("feature_dim").get<int>();
  cfg.embed_dim = j.at("embed_dim").get<int>();
  cfg.enc_hidden = j.at("enc_hidden").get<int>();
  cfg.enc_layers = j.at("enc_layers").get<int>();
  cfg.use_glimpse = j.at("use_glimpse").get<bool>();
  cfg.feasibility_mask = j.at("feasibility_mask").get<bool>();
  return cfg;
}

}  // namespace

void save_checkpoint(const PolicyParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  json manifest;
  manifest["format"] = "msan-ckpt";
  manifest["version"] = 1;
  manifest["config"] = config_to_json(params.config);
  json blocks = json::array();
  for (const ParamBlock& b : params.blocks) {
    blocks.push_back({{"name", b.name}, {"shape", b.shape.dims}});
  }
  manifest["blocks"] = blocks;
  out << manifest.dump() << "\n";
  for (const ParamBlock& b : params.blocks) {
    out.write(reinterpret_cast<const char*>(b.values.data()),
              static_cast<std::streamsize>(b.values.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed for '" + path + "'");
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint '" + path + "'");
  std::string header;
  std::getline(in, header);
  json manifest = json::parse(header, nullptr, false);
  if (manifest.is_discarded() || manifest.value("format", "") != "msan-ckpt") {
    throw std::runtime_error("'" + path + "' is not an msan checkpoint");
  }
  PolicyParams params;
  params.config = config_from_json(manifest.at("config"));
  auto expected = block_manifest(params.config);
  const auto& blocks = manifest.at("blocks");
  if (blocks.size() != expected.size()) {
    throw std::runtime_error("checkpoint '" + path + "': block count mismatch");
  }
  for (size_t i = 0; i < expected.size(); ++i) {
    const auto& [name, shape] = expected[i];
    if (blocks[i].at("name").get<std::string>() != name ||
        blocks[i].at("shape").get<std::vector<int>>() != shape.dims) {
      throw std::runtime_error("checkpoint '" + path + "': block " + std::to_string(i) +
                               " does not match the shape manifest for its config");
    }
    ParamBlock blk;
    blk.name = name;
    blk.shape = shape;
    blk.values.resize(shape.numel());
    in.read(reinterpret_cast<char*>(blk.values.data()),
            static_cast<std::streamsize>(blk.values.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint '" + path + "': truncated block '" + name + "'");
    for (double v : blk.values) {
      if (!std::isfinite(v)) {
        throw std::runtime_error("checkpoint '" + path + "': non-finite value in '" + name + "'");
      }
    }
    params.blocks.push_back(std::move(blk));
  }
  return params;
}

// ---------------------------------------------------------------------------
// Network

PolicyNet::PolicyNet(ad::Tape& tape, const PolicyParams& params)
    : tape_(tape), config_(params.config) {
  for (const ParamBlock& b : params.blocks) {
    vars_[b.name] = tape_.leaf(b.values, b.shape);
  }
}

Tensor PolicyNet::gru_cell(const std::string& prefix, Tensor x, Tensor h) {
  auto& t = tape_;
  Tensor z = t.sigmoid(t.add(t.add(t.matmul(var(prefix + ".Wz"), x), t.matmul(var(prefix + ".Uz"), h)),
                             var(prefix + ".bz")));
  Tensor r = t.sigmoid(t.add(t.add(t.matmul(var(prefix + ".Wr"), x), t.matmul(var(prefix + ".Ur"), h)),
                             var(prefix + ".br")));
  Tensor n = t.tanh(t.add(t.add(t.matmul(var(prefix + ".Wn"), x), t.matmul(var(prefix + ".Un"), t.mul(r, h))),
                          var(prefix + ".bn")));
  // h' = (1-z)*n + z*h, written without a ones constant
  return t.add(n, t.mul(z, t.sub(h, n)));
}

PolicyNet::Encoded PolicyNet::encode(const Instance& inst) {
  auto& t = tape_;
  const int m = inst.size();
  const int h = config_.enc_hidden;

  for (const Segment& s : inst.segments) {
    if (static_cast<int>(s.features.size()) != config_.feature_dim) {
      throw ad::ShapeError("segment " + std::to_string(s.index) + " feature dim " +
                           std::to_string(s.features.size()) + " != configured " +
                           std::to_string(config_.feature_dim));
    }
  }

  Encoded enc;
  enc.embedded.reserve(m);
  for (int i = 0; i < m; ++i) {
    Tensor f = t.constant(inst.segments[i].features, Shape{{config_.feature_dim}});
    enc.embedded.push_back(t.add(t.matmul(var("emb.W"), f), var("emb.b")));
  }

  std::vector<Tensor> layer_in = enc.embedded;
  Tensor fwd_final, bwd_final;
  std::vector<Tensor> layer_out;
  for (int l = 0; l < config_.enc_layers; ++l) {
    std::string pf = "enc.l" + std::to_string(l) + ".fwd";
    std::string pb = "enc.l" + std::to_string(l) + ".bwd";
    std::vector<Tensor> fwd(m), bwd(m);
    Tensor state = t.constant(std::vector<double>(h, 0.0), Shape{{h}});
    for (int i = 0; i < m; ++i) {
      state = gru_cell(pf, layer_in[i], state);
      fwd[i] = state;
    }
    fwd_final = state;
    state = t.constant(std::vector<double>(h, 0.0), Shape{{h}});
    for (int i = m - 1; i >= 0; --i) {
      state = gru_cell(pb, layer_in[i], state);
      bwd[i] = state;
    }
    bwd_final = state;
    layer_out.clear();
    layer_out.reserve(m);
    for (int i = 0; i < m; ++i) layer_out.push_back(t.concat(fwd[i], bwd[i]));
    layer_in = layer_out;
  }

  enc.H = t.stack_cols(layer_out);
  enc.dec_init = t.add(t.matmul(var("init.W"), t.concat(fwd_final, bwd_final)), var("init.b"));
  return enc;
}

Tensor PolicyNet::decode_step(const Encoded& enc, Tensor dec_state,
                              const std::vector<uint8_t>& blocked) {
  auto& t = tape_;
  Tensor logits1 = t.matvec_t(enc.H, t.matmul(var("att1.W"), dec_state));
  if (!config_.use_glimpse) return t.masked_softmax(logits1, blocked);
  Tensor glimpse = t.softmax(logits1);
  Tensor context = t.matmul(enc.H, glimpse);
  Tensor query = t.concat(dec_state, context);
  Tensor logits2 = t.matvec_t(enc.H, t.matmul(var("att2.W"), query));
  return t.masked_softmax(logits2, blocked);
}

Rollout PolicyNet::rollout(const Instance& inst, const DurationWindow& window, SampleMode mode,
                           Rng& rng) {
  auto& t = tape_;
  const int m = inst.size();
  Encoded enc = encode(inst);

  std::vector<uint8_t> blocked(m, 0);
  std::vector<int> picked;
  std::vector<Tensor> logprobs;
  Rollout out;
  out.terminated_by = Termination::kExhausted;
  double tau = 0.0;

  Tensor prev_x = t.constant(std::vector<double>(config_.embed_dim, 0.0), Shape{{config_.embed_dim}});
  if (inst.force_end_segment) {
    if (inst.duration(m - 1) > window.t_max_s) {
      throw InfeasibleInstanceError("instance '" + inst.id +
                                    "': forced end segment alone exceeds the duration window");
    }
    picked.push_back(m - 1);
    blocked[m - 1] = 1;
    tau += inst.duration(m - 1);
    prev_x = enc.embedded[m - 1];
  }

  Tensor dec_state = enc.dec_init;
  while (true) {
    std::vector<uint8_t> step_mask = blocked;
    if (config_.feasibility_mask) {
      for (int i = 0; i < m; ++i) {
        if (!step_mask[i] && tau + inst.duration(i) > window.t_max_s) step_mask[i] = 1;
      }
    }
    bool any_free = false;
    for (int i = 0; i < m; ++i) {
      if (!step_mask[i]) { any_free = true; break; }
    }
    if (!any_free) {
      out.terminated_by = config_.feasibility_mask && static_cast<int>(picked.size()) < m
                              ? Termination::kEosDuration
                              : Termination::kExhausted;
      break;
    }

    dec_state = gru_cell("dec", prev_x, dec_state);
    Tensor probs = decode_step(enc, dec_state, step_mask);
    const std::vector<double>& p = t.values(probs);

    int action = -1;
    if (mode == SampleMode::kGreedy) {
      double best = -1.0;
      for (int i = 0; i < m; ++i) {
        if (!step_mask[i] && p[i] > best) {
          best = p[i];
          action = i;
        }
      }
    } else {
      double u = rng.uniform();
      double cum = 0.0;
      for (int i = 0; i < m; ++i) {
        if (step_mask[i]) continue;
        cum += p[i];
        action = i;  // falls through to the last free index on rounding
        if (u < cum) break;
      }
    }

    if (tau + inst.duration(action) > window.t_max_s) {
      out.terminated_by = Termination::kEosDuration;
      break;
    }
    logprobs.push_back(t.log(t.slice(probs, action, 1)));
    picked.push_back(action);
    blocked[action] = 1;
    tau += inst.duration(action);
    prev_x = enc.embedded[action];
  }

  out.selection = Selection::make(inst, picked, "policy");
  Tensor sum = logprobs.empty() ? t.scalar(0.0) : logprobs[0];
  for (size_t i = 1; i < logprobs.size(); ++i) sum = t.add(sum, logprobs[i]);
  out.logprob_sum = sum;
  out.step_logprobs.reserve(logprobs.size());
  for (Tensor lp : logprobs) out.step_logprobs.push_back(t.values(lp)[0]);
  return out;
}

}  // namespace msan
