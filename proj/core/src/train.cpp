#include "mpmflow/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace mpmflow {

using nlohmann::json;

namespace {

LossKind loss_from_name(const std::string& name) {
  if (name == "huber") return LossKind::Huber;
  if (name == "mse") return LossKind::Mse;
  if (name == "mae") return LossKind::Mae;
  throw InvalidInput("unknown loss kind: " + name);
}

const char* loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::Huber: return "huber";
    case LossKind::Mse: return "mse";
    case LossKind::Mae: return "mae";
  }
  return "huber";
}

void validate_config(const TrainConfig& cfg) {
  MPMFLOW_CHECK(cfg.batch_size >= 1, "batch_size must be at least 1");
  // 0 is tolerated so optimizer no-op behavior stays testable.
  MPMFLOW_CHECK(cfg.learning_rate >= 0.0,
                "learning_rate must not be negative");
  MPMFLOW_CHECK(cfg.max_iterations >= 0, "max_iterations must not be negative");
  MPMFLOW_CHECK(cfg.window >= 2, "window must be at least 2");
  MPMFLOW_CHECK(cfg.huber_delta > 0.0, "huber_delta must be positive");
  MPMFLOW_CHECK(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 &&
                    cfg.beta2 < 1.0 && cfg.eps > 0.0,
                "bad optimizer moment coefficients");
  MPMFLOW_CHECK(cfg.stop_ratio >= 0.0 && cfg.stop_ratio < 1.0,
                "stop_ratio must be in [0, 1)");
  MPMFLOW_CHECK(cfg.checkpoint_every >= 0,
                "checkpoint_every must not be negative");
  MPMFLOW_CHECK(cfg.checkpoint_every == 0 || !cfg.checkpoint_dir.empty(),
                "checkpoint_every needs a checkpoint_dir");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* key : allowed)
      if (item.key() == key) ok = true;
    MPMFLOW_CHECK(ok, "unknown training config key: " + item.key());
  }
}

}  // namespace

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw InvalidInput(std::string("training config is not valid JSON: ") +
                       e.what());
  }
  try {
    MPMFLOW_CHECK(j.is_object(), "training config must be a JSON object");
    check_keys(j, {"batch_size", "learning_rate", "max_iterations",
                   "window", "huber_delta", "seed", "beta1", "beta2", "eps",
                   "loss", "checkpoint_every", "checkpoint_dir",
                   "stop_ratio"});
    TrainConfig cfg;
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.max_iterations = j.value("max_iterations", cfg.max_iterations);
    cfg.window = j.value("window", cfg.window);
    cfg.huber_delta = j.value("huber_delta", cfg.huber_delta);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.beta1 = j.value("beta1", cfg.beta1);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.eps = j.value("eps", cfg.eps);
    if (j.contains("loss"))
      cfg.loss = loss_from_name(j.at("loss").get<std::string>());
    cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
    cfg.checkpoint_dir = j.value("checkpoint_dir", cfg.checkpoint_dir);
    cfg.stop_ratio = j.value("stop_ratio", cfg.stop_ratio);
    validate_config(cfg);
    return cfg;
  } catch (const InvalidInput&) {
    throw;
  } catch (const std::exception& e) {
    throw InvalidInput(std::string("training config: ") + e.what());
  }
}

std::string train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["batch_size"] = cfg.batch_size;
  j["learning_rate"] = cfg.learning_rate;
  j["max_iterations"] = cfg.max_iterations;
  j["window"] = cfg.window;
  j["huber_delta"] = cfg.huber_delta;
  j["seed"] = cfg.seed;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["eps"] = cfg.eps;
  j["loss"] = loss_name(cfg.loss);
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["checkpoint_dir"] = cfg.checkpoint_dir;
  j["stop_ratio"] = cfg.stop_ratio;
  return j.dump(2);
}

double sample_loss(const SurrogateModel& model,
                   const std::vector<Tensor4>& window_frames,
                   const Tensor4& target, double delta, LossKind kind) {
  std::vector<Tensor4> latents;
  latents.reserve(window_frames.size());
  for (const Tensor4& x : window_frames) latents.push_back(model.encode(x));
  const Tensor4 xhat = model.decode(model.predict_next(latents));
  const Tensor4 xtilde = model.decode(model.encode(target));
  return pair_loss(target, xhat, delta, kind) +
         pair_loss(target, xtilde, delta, kind);
}

double sample_loss_backward(SurrogateModel& model,
                            const std::vector<Tensor4>& window_frames,
                            const Tensor4& target, double delta,
                            LossKind kind) {
  const std::size_t n = window_frames.size();
  std::vector<SurrogateModel::EncodeCache> enc(n);
  std::vector<Tensor4> latents(n);
  for (std::size_t t = 0; t < n; ++t)
    latents[t] = model.encode_cached(window_frames[t], enc[t]);

  SurrogateModel::PredictCache pred;
  const Tensor4 c_hat = model.predict_cached(latents, pred);
  SurrogateModel::DecodeCache dec_pred;
  const Tensor4 xhat = model.decode_cached(c_hat, dec_pred);

  SurrogateModel::EncodeCache enc_ae;
  const Tensor4 c_ae = model.encode_cached(target, enc_ae);
  SurrogateModel::DecodeCache dec_ae;
  const Tensor4 xtilde = model.decode_cached(c_ae, dec_ae);

  Tensor4 gxhat(xhat.shape[0], xhat.shape[1], xhat.shape[2], xhat.shape[3]);
  const double loss_pred =
      pair_loss_backward(target, xhat, delta, gxhat, kind);
  const Tensor4 gc_hat = model.decode_backward(dec_pred, gxhat);
  std::vector<Tensor4> glatents = model.predict_backward(pred, gc_hat);
  for (std::size_t t = 0; t < n; ++t)
    model.encode_backward(enc[t], glatents[t]);

  Tensor4 gxtilde(xtilde.shape[0], xtilde.shape[1], xtilde.shape[2],
                  xtilde.shape[3]);
  const double loss_ae =
      pair_loss_backward(target, xtilde, delta, gxtilde, kind);
  const Tensor4 gc_ae = model.decode_backward(dec_ae, gxtilde);
  model.encode_backward(enc_ae, gc_ae);
  return loss_pred + loss_ae;
}

TrainReport train(SurrogateModel& model,
                  const std::vector<std::vector<Tensor4>>& sequences,
                  const TrainConfig& cfg) {
  validate_config(cfg);
  MPMFLOW_CHECK(cfg.window == model.hyper.window,
                "config window does not match the model");
  MPMFLOW_CHECK(!sequences.empty(), "training needs at least one sequence");
  // Flat index of (sequence, window start) pairs the sampler draws from.
  std::vector<std::pair<std::size_t, std::size_t>> samples;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    MPMFLOW_CHECK(
        sequences[s].size() >= static_cast<std::size_t>(cfg.window) + 1,
        "every sequence needs at least window+1 frames");
    for (std::size_t start = 0;
         start + cfg.window < sequences[s].size(); ++start)
      samples.emplace_back(s, start);
  }

  std::vector<ParamRef> refs = model.params();
  std::vector<std::vector<float>> adam_m(refs.size()), adam_v(refs.size());
  for (std::size_t p = 0; p < refs.size(); ++p) {
    adam_m[p].assign(refs[p].value->size(), 0.0f);
    adam_v[p].assign(refs[p].value->size(), 0.0f);
  }

  Pcg32 rng(cfg.seed, 11);
  TrainReport report;
  std::string last_checkpoint;
  const double inv_batch = 1.0 / cfg.batch_size;

  for (std::int64_t iter = 0; iter < cfg.max_iterations; ++iter) {
    model.zero_grads();
    double batch_loss = 0.0;
    for (std::int32_t b = 0; b < cfg.batch_size; ++b) {
      const auto& [s, start] =
          samples[rng.bounded(static_cast<std::uint32_t>(samples.size()))];
      const std::vector<Tensor4>& seq = sequences[s];
      std::vector<Tensor4> window_frames(seq.begin() + start,
                                         seq.begin() + start + cfg.window);
      batch_loss += sample_loss_backward(model, window_frames,
                                         seq[start + cfg.window],
                                         cfg.huber_delta, cfg.loss);
    }
    batch_loss *= inv_batch;
    report.loss_curve.push_back(batch_loss);
    report.iterations = iter + 1;

    if (!std::isfinite(batch_loss)) {
      report.aborted = true;
      if (!last_checkpoint.empty()) {
        SurrogateModel restored = load_model(last_checkpoint);
        std::vector<ParamRef> from = restored.params();
        for (std::size_t p = 0; p < refs.size(); ++p)
          *refs[p].value = *from[p].value;
      }
      return report;
    }

    const double t = static_cast<double>(iter + 1);
    const float bc1 = static_cast<float>(1.0 - std::pow(cfg.beta1, t));
    const float bc2 = static_cast<float>(1.0 - std::pow(cfg.beta2, t));
    const float b1 = static_cast<float>(cfg.beta1);
    const float b2 = static_cast<float>(cfg.beta2);
    const float lr = static_cast<float>(cfg.learning_rate);
    const float eps = static_cast<float>(cfg.eps);
    const float scale = static_cast<float>(inv_batch);
    for (std::size_t p = 0; p < refs.size(); ++p) {
      float* w = refs[p].value->data();
      const float* g = refs[p].grad->data();
      float* m = adam_m[p].data();
      float* v = adam_v[p].data();
      const std::size_t count = refs[p].value->size();
      for (std::size_t i = 0; i < count; ++i) {
        const float gi = g[i] * scale;
        m[i] = b1 * m[i] + (1.0f - b1) * gi;
        v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
        if (lr != 0.0f)
          w[i] -= lr * (m[i] / bc1) /
                  (std::sqrt(v[i] / bc2) + eps);
      }
    }

    if (cfg.checkpoint_every > 0 &&
        (iter + 1) % cfg.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "/checkpoint_%08lld.mpmw",
                    static_cast<long long>(iter + 1));
      last_checkpoint = cfg.checkpoint_dir + name;
      save_model(last_checkpoint, model);
    }
    if (cfg.stop_ratio > 0.0 &&
        batch_loss <= cfg.stop_ratio * report.loss_curve.front())
      break;
  }
  return report;
}

void save_loss_curve(const std::string& path,
                     const std::vector<double>& curve) {
  std::ofstream out(path);
  MPMFLOW_CHECK(out.good(), "cannot open loss curve file " + path);
  out << "iteration,loss\n";
  for (std::size_t i = 0; i < curve.size(); ++i)
    out << i + 1 << "," << curve[i] << "\n";
  MPMFLOW_CHECK(out.good(), "loss curve write failed");
}

}  // namespace mpmflow
