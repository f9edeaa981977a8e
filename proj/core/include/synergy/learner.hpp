#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "synergy/buffer.hpp"
#include "synergy/dataset.hpp"
#include "synergy/fisher.hpp"
#include "synergy/network.hpp"
#include "synergy/tensor.hpp"

namespace synergy {

enum class MethodKind {
  Sgd,
  Er,
  DerPP,
  MeanEr,
  MeanErOewc,
  Synergy,
  SynergyNoAdjust,      // consolidation uses raw f_star instead of filter means
  SynergyWorkingFisher  // Fisher estimated on the current batch with the working net
};

inline std::string method_name(MethodKind m) {
  switch (m) {
    case MethodKind::Sgd: return "sgd";
    case MethodKind::Er: return "er";
    case MethodKind::DerPP: return "derpp";
    case MethodKind::MeanEr: return "mean_er";
    case MethodKind::MeanErOewc: return "mean_er_oewc";
    case MethodKind::Synergy: return "synergy";
    case MethodKind::SynergyNoAdjust: return "synergy_no_adjust";
    case MethodKind::SynergyWorkingFisher: return "synergy_working_fisher";
  }
  return "unknown";
}

inline MethodKind method_from_name(const std::string& s) {
  for (MethodKind m :
       {MethodKind::Sgd, MethodKind::Er, MethodKind::DerPP, MethodKind::MeanEr,
        MethodKind::MeanErOewc, MethodKind::Synergy, MethodKind::SynergyNoAdjust,
        MethodKind::SynergyWorkingFisher})
    if (method_name(m) == s) return m;
  throw ConfigError("unknown method '" + s + "'");
}

struct SynergyConfig {
  double eta = 0.1;      // SGD learning rate
  double lambda = 1.0;   // semantic replay (consistency) weight
  double beta = 1.0;     // consolidation weight
  double alpha_s = 0.999;
  double r_s = 1.0;      // semantic update probability
  double alpha_f = 0.999;
  double r_f = 0.1;      // Fisher update probability
  int64_t batch_size = 32;
  int64_t epochs = 1;
  size_t buffer_size = 500;
  int64_t fisher_batch = 0;  // minibatch for Fisher estimation; 0 -> batch_size
  double derpp_alpha = 0.5;  // DER++ logit-consistency weight
  double derpp_beta = 1.0;   // DER++ replay-CE weight
  bool strict_fisher_ema = false;

  int64_t fisher_batch_or_default() const {
    return fisher_batch > 0 ? fisher_batch : batch_size;
  }

  void validate() const {
    if (eta <= 0.0) throw ConfigError("eta must be positive");
    if (lambda < 0.0 || beta < 0.0) throw ConfigError("lambda and beta must be >= 0");
    if (alpha_s < 0.0 || alpha_s > 1.0 || alpha_f < 0.0 || alpha_f > 1.0)
      throw ConfigError("EMA decays must be in [0, 1]");
    if (r_s < 0.0 || r_s > 1.0 || r_f < 0.0 || r_f > 1.0)
      throw ConfigError("update probabilities must be in [0, 1]");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (fisher_batch < 0) throw ConfigError("fisher_batch must be >= 0");
    if (derpp_alpha < 0.0 || derpp_beta < 0.0)
      throw ConfigError("DER++ weights must be >= 0");
  }
};

struct StepReport {
  int64_t step = 0;
  double loss_total = 0.0;
  double loss_stream_ce = 0.0;
  double loss_replay_ce = 0.0;
  double loss_semantic_mse = 0.0;   // unweighted L_sr
  double loss_consolidation = 0.0;  // unweighted L_sc (or oEWC penalty)
  double loss_logit_mse = 0.0;      // unweighted DER++ consistency term
  bool replay_used = false;
  bool semantic_updated = false;
  bool fisher_updated = false;
};

// One continual learner: a working model trained by SGD plus, depending on
// the method, an episodic reservoir buffer, an EMA semantic memory and an
// EMA Fisher importance estimate. step() deliberately takes only a batch of
// inputs and labels: no task identity or boundary information exists in the
// update path. The oEWC baseline alone consumes boundaries, via
// on_task_boundary().
template <typename T>
class Learner {
 public:
  Learner(MethodKind kind, const SynergyConfig& cfg, Network<T> working, Shape item_shape,
          int32_t classes, uint64_t master_seed)
      : kind_(kind), cfg_(cfg), working_(std::move(working)), classes_(classes) {
    cfg_.validate();
    if (classes_ <= 0) throw ConfigError("learner needs a positive class count");
    if (uses_buffer())
      buffer_.emplace(cfg_.buffer_size, master_seed, item_shape, classes_);
    if (uses_semantic())
      semantic_.emplace(working_, cfg_.alpha_s, cfg_.r_s,
                        derive_seed(master_seed, RngStream::SemanticGate));
    if (uses_fisher()) {
      fisher_.emplace(working_.parameter_count(), cfg_.alpha_f, cfg_.r_f,
                      derive_seed(master_seed, RngStream::FisherGate), cfg_.strict_fisher_ema);
      filter_map_ = build_filter_map(working_);
    }
  }

  MethodKind kind() const { return kind_; }
  const SynergyConfig& config() const { return cfg_; }
  Network<T>& working() { return working_; }
  const Network<T>& working() const { return working_; }
  bool has_semantic() const { return semantic_.has_value(); }
  const Network<T>& semantic_model() const {
    if (!semantic_) throw StateError("method '" + method_name(kind_) + "' has no semantic memory");
    return semantic_->model();
  }
  EpisodicBuffer<T>* buffer() { return buffer_ ? &*buffer_ : nullptr; }
  const FisherState<T>* fisher_state() const { return fisher_ ? &*fisher_ : nullptr; }
  std::shared_ptr<const std::vector<T>> adjusted_fisher() const { return f_adj_; }
  int64_t steps_done() const { return step_count_; }

  // The model used for predictions: the semantic memory when the method has
  // one, the working model otherwise (or on request).
  const Network<T>& inference_model(bool use_semantic = true) const {
    if (use_semantic && semantic_) return semantic_->model();
    return working_;
  }

  Tensor<T> predict(const Tensor<T>& x, bool use_semantic = true) const {
    return inference_model(use_semantic).forward(x, nullptr);
  }

  StepReport step(const Tensor<T>& x, std::span<const int32_t> y) {
    if (x.ndim() < 2 || x.dim(0) != static_cast<int64_t>(y.size()))
      throw ShapeError("step: batch size mismatch between inputs and labels");
    StepReport rep;
    rep.step = step_count_;
    switch (kind_) {
      case MethodKind::Sgd: sgd_like_step(x, y, rep); break;
      case MethodKind::Er: er_like_step(x, y, rep); break;
      case MethodKind::DerPP: derpp_step(x, y, rep); break;
      case MethodKind::MeanEr:
      case MethodKind::MeanErOewc:
      case MethodKind::Synergy:
      case MethodKind::SynergyNoAdjust:
      case MethodKind::SynergyWorkingFisher: synergy_like_step(x, y, rep); break;
    }
    ++step_count_;
    return rep;
  }

  // oEWC boundary handling: anchor the current working weights and fold the
  // finished task's Fisher into the running estimate. `indices` selects the
  // task's rows in `data`.
  void on_task_boundary(const LabeledDataset<T>& data, std::span<const uint32_t> indices) {
    if (kind_ != MethodKind::MeanErOewc)
      throw StateError("on_task_boundary is only meaningful for the oEWC baseline");
    if (indices.empty()) throw ConfigError("oEWC boundary with no task data");
    std::vector<T> acc(working_.parameter_count(), T(0));
    const size_t bs = static_cast<size_t>(cfg_.fisher_batch_or_default());
    for (size_t start = 0; start < indices.size(); start += bs) {
      const size_t count = std::min(bs, indices.size() - start);
      Tensor<T> batch = data.gather(indices.subspan(start, count));
      std::vector<int32_t> labels(count);
      for (size_t i = 0; i < count; ++i) labels[i] = data.labels[indices[start + i]];
      detail::accumulate_squared_loglik_grads(working_, batch, labels, acc);
    }
    const T inv = T(1) / static_cast<T>(indices.size());
    for (T& v : acc) v *= inv;
    if (!oewc_ready_) {
      oewc_fisher_ = std::make_shared<std::vector<T>>(std::move(acc));
    } else {
      auto merged = std::make_shared<std::vector<T>>(*oewc_fisher_);
      const T a = static_cast<T>(cfg_.alpha_f), b = static_cast<T>(1.0 - cfg_.alpha_f);
      for (size_t i = 0; i < merged->size(); ++i) (*merged)[i] = a * (*merged)[i] + b * acc[i];
      oewc_fisher_ = std::move(merged);
    }
    oewc_anchor_ = std::make_shared<std::vector<T>>(working_.flat());
    oewc_ready_ = true;
  }

 private:
  bool uses_buffer() const { return kind_ != MethodKind::Sgd; }
  bool uses_semantic() const {
    return kind_ == MethodKind::MeanEr || kind_ == MethodKind::MeanErOewc ||
           kind_ == MethodKind::Synergy || kind_ == MethodKind::SynergyNoAdjust ||
           kind_ == MethodKind::SynergyWorkingFisher;
  }
  bool uses_fisher() const {
    return kind_ == MethodKind::Synergy || kind_ == MethodKind::SynergyNoAdjust ||
           kind_ == MethodKind::SynergyWorkingFisher;
  }

  void sgd_like_step(const Tensor<T>& x, std::span<const int32_t> y, StepReport& rep) {
    Tape<T> tape;
    Tensor<T> logits = working_.forward(x, &tape);
    Tensor<T> loss = softmax_cross_entropy(&tape, logits, y);
    rep.loss_stream_ce = static_cast<double>(loss.item());
    rep.loss_total = rep.loss_stream_ce;
    tape.backward(loss);
    sgd_step(working_.parameters(), cfg_.eta);
  }

  void er_like_step(const Tensor<T>& x, std::span<const int32_t> y, StepReport& rep) {
    Tape<T> tape;
    Tensor<T> logits = working_.forward(x, &tape);
    Tensor<T> loss = softmax_cross_entropy(&tape, logits, y);
    rep.loss_stream_ce = static_cast<double>(loss.item());
    auto replay = buffer_->sample(static_cast<size_t>(cfg_.batch_size));
    if (replay) {
      Tensor<T> rlogits = working_.forward(replay->inputs, &tape);
      Tensor<T> rloss = softmax_cross_entropy<T>(&tape, rlogits, replay->labels);
      rep.loss_replay_ce = static_cast<double>(rloss.item());
      rep.replay_used = true;
      loss = add(&tape, loss, rloss);
    }
    rep.loss_total = static_cast<double>(loss.item());
    tape.backward(loss);
    sgd_step(working_.parameters(), cfg_.eta);
    add_batch_to_buffer(x, y, nullptr);
  }

  void derpp_step(const Tensor<T>& x, std::span<const int32_t> y, StepReport& rep) {
    Tape<T> tape;
    Tensor<T> logits = working_.forward(x, &tape);
    Tensor<T> loss = softmax_cross_entropy(&tape, logits, y);
    rep.loss_stream_ce = static_cast<double>(loss.item());
    auto replay_ce = buffer_->sample(static_cast<size_t>(cfg_.batch_size));
    if (replay_ce) {
      Tensor<T> rlogits = working_.forward(replay_ce->inputs, &tape);
      Tensor<T> rloss = softmax_cross_entropy<T>(&tape, rlogits, replay_ce->labels);
      rep.loss_replay_ce = static_cast<double>(rloss.item());
      rep.replay_used = true;
      loss = add(&tape, loss, scale(&tape, rloss, cfg_.derpp_beta));
    }
    auto replay_mse = buffer_->sample(static_cast<size_t>(cfg_.batch_size));
    if (replay_mse && replay_mse->has_logits) {
      Tensor<T> mlogits = working_.forward(replay_mse->inputs, &tape);
      Tensor<T> mloss = mse(&tape, mlogits, replay_mse->logits);
      rep.loss_logit_mse = static_cast<double>(mloss.item());
      loss = add(&tape, loss, scale(&tape, mloss, cfg_.derpp_alpha));
    }
    rep.loss_total = static_cast<double>(loss.item());
    tape.backward(loss);
    sgd_step(working_.parameters(), cfg_.eta);
    add_batch_to_buffer(x, y, &logits);
  }

  // Shared update for Mean-ER, Mean-ER+oEWC and the SYNERgy family. The
  // zero-weight branches are skipped outright so that a fully ablated run
  // performs the exact same floating-point work as plain ER.
  void synergy_like_step(const Tensor<T>& x, std::span<const int32_t> y, StepReport& rep) {
    Tape<T> tape;
    Tensor<T> logits = working_.forward(x, &tape);
    Tensor<T> loss = softmax_cross_entropy(&tape, logits, y);
    rep.loss_stream_ce = static_cast<double>(loss.item());
    auto replay = buffer_->sample(static_cast<size_t>(cfg_.batch_size));
    Tensor<T> rlogits;
    if (replay) {
      rlogits = working_.forward(replay->inputs, &tape);
      Tensor<T> rloss = softmax_cross_entropy<T>(&tape, rlogits, replay->labels);
      rep.loss_replay_ce = static_cast<double>(rloss.item());
      rep.replay_used = true;
      loss = add(&tape, loss, rloss);
    }
    if (cfg_.lambda > 0.0 && replay) {
      // Consistency toward the semantic memory's logits; theta_s is constant
      // here (its forward runs off-tape), so no gradient ever reaches it.
      Tensor<T> slogits = semantic_->model().forward(replay->inputs, nullptr);
      Tensor<T> sr = mse(&tape, rlogits, slogits);
      rep.loss_semantic_mse = static_cast<double>(sr.item());
      loss = add(&tape, loss, scale(&tape, sr, cfg_.lambda));
    }
    if (cfg_.beta > 0.0) {
      if (fisher_ && fisher_->initialized) {
        Tensor<T> sc = consolidation_loss(&tape, working_, semantic_->model(), f_adj_);
        rep.loss_consolidation = static_cast<double>(sc.item());
        loss = add(&tape, loss, scale(&tape, sc, cfg_.beta));
      } else if (kind_ == MethodKind::MeanErOewc && oewc_ready_) {
        Tensor<T> pen =
            quadratic_penalty<T>(&tape, working_.parameters(), oewc_anchor_, oewc_fisher_);
        rep.loss_consolidation = static_cast<double>(pen.item());
        loss = add(&tape, loss, scale(&tape, pen, cfg_.beta));
      }
    }
    rep.loss_total = static_cast<double>(loss.item());
    tape.backward(loss);
    sgd_step(working_.parameters(), cfg_.eta);
    rep.semantic_updated = semantic_->maybe_update(working_);
    if (fisher_) {
      if (kind_ == MethodKind::SynergyWorkingFisher) {
        // Ablation: importance from the current stream batch under the
        // working weights, still gated and EMA-merged.
        if (fisher_->gate_fires()) {
          fisher_->merge(estimate_fisher_batch(working_, x, y));
          rep.fisher_updated = true;
        }
      } else {
        rep.fisher_updated = maybe_update_fisher(
            *fisher_, semantic_->model(), *buffer_,
            static_cast<size_t>(cfg_.fisher_batch_or_default()));
      }
      if (rep.fisher_updated) refresh_adjusted_fisher();
    }
    add_batch_to_buffer(x, y, nullptr);
  }

  void refresh_adjusted_fisher() {
    if (kind_ == MethodKind::SynergyNoAdjust)
      f_adj_ = std::make_shared<const std::vector<T>>(fisher_->f_star);
    else
      f_adj_ = std::make_shared<const std::vector<T>>(adjust_fisher(fisher_->f_star, filter_map_));
  }

  void add_batch_to_buffer(const Tensor<T>& x, std::span<const int32_t> y,
                           const Tensor<T>* logits) {
    const size_t dim = static_cast<size_t>(x.numel() / x.dim(0));
    auto xv = x.data();
    for (size_t i = 0; i < y.size(); ++i) {
      std::span<const T> row{xv.data() + i * dim, dim};
      if (logits) {
        auto lv = logits->data();
        const size_t c = static_cast<size_t>(classes_);
        buffer_->add(row, y[i], {lv.data() + i * c, c});
      } else {
        buffer_->add(row, y[i]);
      }
    }
  }

  MethodKind kind_;
  SynergyConfig cfg_;
  Network<T> working_;
  int32_t classes_ = 0;
  int64_t step_count_ = 0;
  std::optional<EpisodicBuffer<T>> buffer_;
  std::optional<SemanticMemory<T>> semantic_;
  std::optional<FisherState<T>> fisher_;
  FilterMap filter_map_;
  std::shared_ptr<const std::vector<T>> f_adj_;
  std::shared_ptr<std::vector<T>> oewc_fisher_;
  std::shared_ptr<std::vector<T>> oewc_anchor_;
  bool oewc_ready_ = false;
};

}  // namespace synergy
