#include "tscl/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <utility>

#include "tscl/error.hpp"
#include "tscl/util.hpp"

namespace tscl::train {

using nn::Index;
using nn::Matrix;

void TrainConfig::validate() const {
  TSCL_REQUIRE(total_steps >= 1, ConfigError, "train.total_steps must be >= 1");
  TSCL_REQUIRE(batch_size >= 2, ConfigError, "train.batch_size must be >= 2");
  TSCL_REQUIRE(warmup_fraction > 0.0 && warmup_fraction < 1.0, ConfigError,
               "train.warmup_fraction must be in (0, 1)");
  TSCL_REQUIRE(base_lr > 0.0 && peak_lr > 0.0 && final_lr > 0.0, ConfigError,
               "train learning rates must be positive");
  TSCL_REQUIRE(weight_decay >= 0.0, ConfigError, "train.weight_decay must be >= 0");
  TSCL_REQUIRE(momentum >= 0.0 && momentum < 1.0, ConfigError, "train.momentum must be in [0, 1)");
  TSCL_REQUIRE(group_size >= 1, ConfigError, "train.group_size must be >= 1");
  TSCL_REQUIRE(eval_every >= 1, ConfigError, "train.eval_every must be >= 1");
}

std::size_t TrainConfig::warmup_steps() const {
  return static_cast<std::size_t>(
      std::ceil(warmup_fraction * static_cast<double>(total_steps) - 1e-12));
}

double one_cycle_lr(std::size_t step, const TrainConfig& cfg) {
  if (step >= cfg.total_steps)
    throw ArgumentError("one_cycle_lr: step " + std::to_string(step) + " outside [0, " +
                        std::to_string(cfg.total_steps) + ")");
  const std::size_t warm = cfg.warmup_steps();
  auto cosine = [](double from, double to, double frac) {
    return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
  };
  if (step <= warm) {
    if (warm == 0) return cfg.peak_lr;
    return cosine(cfg.base_lr, cfg.peak_lr, static_cast<double>(step) / static_cast<double>(warm));
  }
  const std::size_t last = cfg.total_steps - 1;
  return cosine(cfg.peak_lr, cfg.final_lr,
                static_cast<double>(step - warm) / static_cast<double>(last - warm));
}

std::size_t select_checkpoint(const std::vector<ValPoint>& history) {
  TSCL_REQUIRE(!history.empty(), ArgumentError, "select_checkpoint: empty history");
  const ValPoint* best = &history.front();
  for (const auto& p : history)
    if (p.score > best->score || (p.score == best->score && p.step < best->step)) best = &p;
  return best->step;
}

void PretrainSettings::validate() const {
  model.validate();
  train.validate();
  probe.validate();
  TSCL_REQUIRE(ssl.temperature > 0.0, ConfigError, "ssl.temperature must be > 0");
  TSCL_REQUIRE(ssl.momentum >= 0.0 && ssl.momentum <= 1.0, ConfigError,
               "ssl.momentum must be in [0, 1]");
  if (ssl.framework == ssl::Framework::kMoco)
    TSCL_REQUIRE(ssl.queue_capacity >= train.batch_size &&
                     ssl.queue_capacity % train.batch_size == 0,
                 ConfigError,
                 "ssl.queue_capacity (" + std::to_string(ssl.queue_capacity) +
                     ") must be a positive multiple of train.batch_size (" +
                     std::to_string(train.batch_size) + ")");
}

nlohmann::json PretrainSettings::to_json() const {
  nlohmann::json j;
  j["model"] = tscl::to_json(model);
  j["augment"] = {{"strategy", augment::to_string(augment.strategy)},
                  {"t_up", augment.t_up},
                  {"t_int_1", augment.t_int_1},
                  {"t_int_2", augment.t_int_2},
                  {"share_indices", augment.share_indices},
                  {"jitter_sigma", augment.jitter_sigma},
                  {"resize_low", augment.resize_low},
                  {"resize_high", augment.resize_high},
                  {"mask_ratio", augment.mask_ratio}};
  j["ssl"] = {{"framework", ssl::to_string(ssl.framework)},
              {"temperature", ssl.temperature},
              {"momentum", ssl.momentum},
              {"queue_capacity", ssl.queue_capacity},
              {"vicreg_invariance", ssl.vicreg.invariance},
              {"vicreg_variance", ssl.vicreg.variance},
              {"vicreg_covariance", ssl.vicreg.covariance},
              {"vicreg_gamma", ssl.vicreg.gamma},
              {"vicreg_eps", ssl.vicreg.eps},
              {"collapse_threshold", ssl.collapse_threshold}};
  j["train"] = {{"total_steps", train.total_steps},     {"batch_size", train.batch_size},
                {"base_lr", train.base_lr},             {"peak_lr", train.peak_lr},
                {"final_lr", train.final_lr},           {"warmup_fraction", train.warmup_fraction},
                {"weight_decay", train.weight_decay},   {"momentum", train.momentum},
                {"group_size", train.group_size},       {"eval_every", train.eval_every},
                {"seed", train.seed}};
  j["probe"] = {{"c", probe.c}, {"tolerance", probe.tolerance},
                {"max_iterations", probe.max_iterations}};
  return j;
}

namespace {

bool uses_target(ssl::Framework f) {
  return f == ssl::Framework::kByol || f == ssl::Framework::kMoco;
}

RngStream root_stream(const PretrainSettings& s) { return RngStream(s.train.seed, 0); }

}  // namespace

PretrainState PretrainState::create(const PretrainSettings& s) {
  s.validate();
  RngStream init = root_stream(s).substream(StreamPurpose::kInit);
  PretrainState st{SslModel<float>(s.model, s.ssl.framework == ssl::Framework::kByol, init),
                   std::nullopt, std::nullopt,
                   optim::Sgd<float>(s.train.momentum, s.train.weight_decay)};
  if (uses_target(s.ssl.framework)) {
    st.target = st.online;
    st.target->predictor.reset();
  }
  if (s.ssl.framework == ssl::Framework::kMoco)
    st.queue.emplace(s.ssl.queue_capacity, s.model.projection_dim);
  return st;
}

std::pair<Matrix<float>, Matrix<float>> build_views(std::span<const Sample* const> batch,
                                                    std::span<const std::size_t> sample_ids,
                                                    std::size_t step, const PretrainSettings& s,
                                                    const RngStream& seed_rng) {
  TSCL_REQUIRE(batch.size() == sample_ids.size() && !batch.empty(), ArgumentError,
               "build_views: batch and id lists differ in length");
  const auto& first = batch.front()->series.front();
  const Index t = first.length();
  const Index c = first.channels();
  const std::size_t g = s.train.group_size;
  const Index rows_per_sample = static_cast<Index>(g) * t;
  Matrix<float> v1(static_cast<Index>(batch.size()) * rows_per_sample, c);
  Matrix<float> v2(v1.rows(), c);
  parallel_for(batch.size(), [&](std::size_t i) {
    RngStream pick = seed_rng.substream(StreamPurpose::kGroupSelect, step, sample_ids[i]);
    RngStream aug = seed_rng.substream(StreamPurpose::kAugment, step, sample_ids[i]);
    const auto group = select_group(*batch[i], g, pick);
    const auto [a, b] = augment::make_views(group, s.augment, aug);
    for (std::size_t j = 0; j < g; ++j) {
      const Index row = static_cast<Index>(i) * rows_per_sample + static_cast<Index>(j) * t;
      v1.middleRows(row, t) = a[j].values().cast<float>();
      v2.middleRows(row, t) = b[j].values().cast<float>();
    }
  });
  return {std::move(v1), std::move(v2)};
}

StepResult pretrain_step(PretrainState& state, std::span<const Sample* const> batch,
                         std::span<const std::size_t> sample_ids, std::size_t step,
                         const PretrainSettings& s, const RngStream& seed_rng) {
  const Index b = static_cast<Index>(batch.size());
  const Index g = static_cast<Index>(s.train.group_size);
  auto [v1, v2] = build_views(batch, sample_ids, step, s, seed_rng);
  const Index t = v1.rows() / (b * g);
  // Both views go through one forward pass and share batch statistics.
  Matrix<float> x(2 * v1.rows(), v1.cols());
  x << v1, v2;

  StepResult out;
  out.lr = one_cycle_lr(step, s.train);
  RngStream drop = seed_rng.substream(StreamPurpose::kDropout, step);
  nn::Pass pass{true, t, &drop};
  auto& net = state.online;
  const Matrix<float> h = nn::group_mean(net.encoder.forward(x, pass), g);
  const Matrix<float> z = net.projector.forward(h, pass);

  auto target_projection = [&] {
    auto& tgt = *state.target;
    return tgt.projector.forward(nn::group_mean(tgt.encoder.forward(x, pass), g), pass);
  };

  Matrix<float> dz(z.rows(), z.cols());
  switch (s.ssl.framework) {
    case ssl::Framework::kSimclr: {
      auto r = ssl::nt_xent(Matrix<float>(z.topRows(b)), Matrix<float>(z.bottomRows(b)),
                            s.ssl.temperature);
      out.loss = r.loss;
      dz << r.grad_a, r.grad_b;
      break;
    }
    case ssl::Framework::kVicreg: {
      auto r = ssl::vicreg_loss(Matrix<float>(z.topRows(b)), Matrix<float>(z.bottomRows(b)),
                                s.ssl.vicreg);
      out.loss = r.loss;
      dz << r.grad_a, r.grad_b;
      break;
    }
    case ssl::Framework::kByol: {
      const Matrix<float> p = net.predictor->forward(z, pass);
      const Matrix<float> tz = target_projection();
      auto r = ssl::byol_loss(Matrix<float>(p.topRows(b)), Matrix<float>(p.bottomRows(b)),
                              Matrix<float>(tz.topRows(b)), Matrix<float>(tz.bottomRows(b)));
      out.loss = r.loss;
      Matrix<float> dp(p.rows(), p.cols());
      dp << r.grad_a, r.grad_b;
      dz = net.predictor->backward(dp);
      break;
    }
    case ssl::Framework::kMoco: {
      const Matrix<float> tz = target_projection();
      const Matrix<float> k1 = tz.topRows(b), k2 = tz.bottomRows(b);
      auto r1 = ssl::moco_loss(Matrix<float>(z.topRows(b)), k2, *state.queue, s.ssl.temperature);
      auto r2 = ssl::moco_loss(Matrix<float>(z.bottomRows(b)), k1, *state.queue, s.ssl.temperature);
      out.loss = 0.5 * (r1.loss + r2.loss);
      dz << r1.grad_a * 0.5f, r2.grad_a * 0.5f;
      state.queue->enqueue(k2.cast<double>());
      break;
    }
  }
  if (!std::isfinite(out.loss))
    throw NumericalError("divergence: non-finite loss at step " + std::to_string(step));

  nn::ParamRefs<float> refs;
  net.collect(refs);
  nn::zero_grad(refs);
  net.encoder.backward(nn::group_mean_backward(net.projector.backward(dz), g));
  out.grad_norm = optim::grad_norm(refs);
  if (!std::isfinite(out.grad_norm))
    throw NumericalError("divergence: non-finite gradient at step " + std::to_string(step));
  state.optimizer.step(refs, out.lr);

  if (state.target) {
    nn::ConstParamRefs<float> online;
    std::as_const(net).collect_backbone(online);
    nn::ParamRefs<float> target;
    state.target->collect_backbone(target);
    ssl::momentum_update(online, target, s.ssl.momentum);
  }
  out.embedding_std = ssl::mean_dimension_std(h);
  out.projection_std = ssl::mean_dimension_std(z);
  return out;
}

double validation_score(nn::Encoder<float>& encoder, const Dataset& val,
                        const eval::ProbeConfig& probe) {
  TSCL_REQUIRE(val.has_labels(), ArgumentError, "validation set must be labeled");
  const auto labels = val.labels();
  std::vector<std::size_t> seen(val.n_classes(), 0);
  std::vector<std::size_t> fit, score;
  for (std::size_t i = 0; i < labels.size(); ++i)
    (seen[labels[i]]++ % 2 == 0 ? fit : score).push_back(i);
  TSCL_REQUIRE(!score.empty(), ArgumentError, "validation set too small to split");
  const Dataset fit_ds = val.subset(fit, SplitTag::kTrain);
  const Dataset score_ds = val.subset(score, SplitTag::kTest);
  const auto outcome = eval::linear_probe(eval::extract_features(fit_ds, encoder), fit_ds,
                                          eval::extract_features(score_ds, encoder), score_ds,
                                          probe);
  return outcome.metrics.overall_accuracy;
}

nlohmann::json checkpoint_config(const PretrainSettings& s, std::size_t step,
                                 const nlohmann::json& extra) {
  nlohmann::json j = extra.is_object() ? extra : nlohmann::json::object();
  j["model"] = to_json(s.model);
  j["framework"] = ssl::to_string(s.ssl.framework);
  j["augment"] = augment::to_string(s.augment.strategy);
  j["step"] = step;
  j["settings"] = s.to_json();
  return j;
}

namespace {

void save_model(const std::filesystem::path& path, const nlohmann::json& config,
                const SslModel<float>& m) {
  nn::ConstParamRefs<float> refs;
  m.collect(refs);
  save_checkpoint(path, config, refs);
}

std::string step_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06zu.ckpt", step);
  return buf;
}

std::ofstream open_log(const std::filesystem::path& path, const char* header) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << header << '\n';
  f.precision(10);
  return f;
}

}  // namespace

PretrainResult pretrain(const Dataset& unlabeled, const Dataset* val, const PretrainSettings& s,
                        const RunHooks& hooks) {
  s.validate();
  const std::size_t n = unlabeled.size();
  const std::size_t batch = s.train.batch_size;
  if (n < batch)
    throw ConfigError("train.batch_size " + std::to_string(batch) + " exceeds the " +
                      std::to_string(n) + " unlabeled samples");
  const auto shape = unlabeled.shape();
  if (static_cast<Index>(shape.c) != s.model.encoder.in_channels)
    throw ConfigError("dataset has C=" + std::to_string(shape.c) + " but model.in_channels is " +
                      std::to_string(s.model.encoder.in_channels));
  if (shape.n_ts < s.train.group_size)
    throw ConfigError("train.group_size " + std::to_string(s.train.group_size) +
                      " exceeds N_ts=" + std::to_string(shape.n_ts));
  if (val && val->shape().c != shape.c)
    throw ArgumentError("validation set has C=" + std::to_string(val->shape().c) +
                        ", unlabeled set has C=" + std::to_string(shape.c));

  const bool write = !hooks.run_dir.empty();
  std::ofstream loss_log, val_log;
  if (write) {
    std::filesystem::create_directories(hooks.run_dir);
    loss_log = open_log(hooks.run_dir / "loss.csv", "step,loss,lr");
    val_log = open_log(hooks.run_dir / "val.csv", "step,score,embedding_std,projection_std");
  }

  PretrainState state = PretrainState::create(s);
  const RngStream root = root_stream(s);
  PretrainResult result;
  result.losses.reserve(s.train.total_steps);

  std::vector<std::size_t> order;
  std::size_t epoch = 0, pos = n;
  std::vector<const Sample*> members(batch);
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t step = 0; step < s.train.total_steps; ++step) {
    if (pos + batch > n) {
      order = root.substream(StreamPurpose::kBatchOrder, epoch++).permutation(n);
      pos = 0;
    }
    const std::span<const std::size_t> ids(order.data() + pos, batch);
    pos += batch;
    for (std::size_t i = 0; i < batch; ++i) members[i] = &unlabeled[ids[i]];
    const StepResult r = pretrain_step(state, members, ids, step, s, root);
    result.losses.push_back(r.loss);
    result.steps_run = step + 1;
    if (write) loss_log << step << ',' << r.loss << ',' << r.lr << '\n';
    if (hooks.on_step) hooks.on_step(step, r);

    const bool last = step + 1 == s.train.total_steps;
    if ((step + 1) % s.train.eval_every != 0 && !last) continue;
    double score = static_cast<double>(step);  // without validation data the latest step wins
    double spread = r.embedding_std;
    double projected = r.projection_std;
    if (val) {
      score = validation_score(state.online.encoder, *val, s.probe);
      const eval::Features h = eval::extract_features(*val, state.online.encoder);
      spread = ssl::mean_dimension_std(h);
      projected = ssl::mean_dimension_std(
          state.online.projector.forward(h.cast<float>(), nn::Pass{false, 0, nullptr}));
    }
    result.history.push_back({step, score});
    result.final_embedding_std = spread;
    result.final_projection_std = projected;
    if (write) {
      val_log << step << ',' << score << ',' << spread << ',' << projected << '\n';
      val_log.flush();
      loss_log.flush();
      save_model(hooks.run_dir / step_name(step), checkpoint_config(s, step, hooks.extra_config),
                 state.online);
    }
    for (const auto& [what, value] : {std::pair{"embedding", spread}, {"projection", projected}})
      if (value < s.ssl.collapse_threshold)
        throw NumericalError(std::string("collapse: mean per-dimension ") + what + " std " +
                             std::to_string(value) + " below " +
                             std::to_string(s.ssl.collapse_threshold) + " at step " +
                             std::to_string(step));
    if (score > best_score) {
      best_score = score;
      result.best_model = state.online;
    }
  }
  result.best_step = select_checkpoint(result.history);
  result.final_model = std::move(state.online);
  if (write) {
    std::filesystem::copy_file(hooks.run_dir / step_name(result.best_step),
                               hooks.run_dir / "best.ckpt",
                               std::filesystem::copy_options::overwrite_existing);
    std::ofstream best(hooks.run_dir / "best.txt");
    best << step_name(result.best_step) << '\n';
  }
  return result;
}

}  // namespace tscl::train
