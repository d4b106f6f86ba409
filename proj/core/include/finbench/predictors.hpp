#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "finbench/panel.hpp"

namespace finbench {

enum class PredictorKind { CSM, BLSW, Ridge, LinearRanker };

std::string_view to_string(PredictorKind kind);
PredictorKind parse_predictor_kind(std::string_view name);

struct PredictorSpec {
  PredictorKind kind = PredictorKind::LinearRanker;
  std::string name;  // report label; the kind name when empty
  std::size_t lookback = 20;
  std::size_t window = 20;  // CSM / BLSW formation window
  double ridge_lambda = 1.0;
  double learning_rate = 1e-3;
  std::size_t epochs = 200;
  std::size_t patience = 20;
  double eta = 5.0;
  // 0 = exact sum over all ordered pairs; otherwise this many sampled partners
  // per stock and day, rescaled to the full pair count.
  std::size_t pair_samples = 0;
  // Halve the step until the training loss does not increase (the objective
  // is non-smooth, so a fixed step can oscillate around hinge kinks).
  bool line_search = true;
  // Start the linear ranker from the ridge solution instead of w = 0.
  bool warm_start = true;
  std::uint64_t seed = 0;

  void validate() const;
  std::string label() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_ic = 0.0;  // NaN when undefined
};

struct TrainedModel {
  PredictorSpec spec;
  std::size_t n_features = 0;
  // lookback * n_features, oldest day first; empty for CSM / BLSW.
  std::vector<double> weights;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

// prod_{k=t-w+1..t} (1 + r_k) - 1 per stock; NaN when any return in the
// window is masked. Throws DataError when t < window.
std::vector<double> predict_csm(const ReturnPanel& returns, std::size_t day, std::size_t window);
// Elementwise negation of predict_csm.
std::vector<double> predict_blsw(const ReturnPanel& returns, std::size_t day, std::size_t window);

// Design rows for one decision day: every stock whose lookback window of
// features is complete (and, when a target is requested, whose next-day
// return is valid).
struct DaySamples {
  std::size_t day = 0;
  std::vector<std::size_t> stocks;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;  // r_{t+1}; empty when built without targets
};

// Flattened window features[t-L+1 .. t] of one stock, or nullopt if any is
// missing or t + 1 < lookback.
std::optional<Eigen::VectorXd> window_features(const FeaturePanel& features, std::size_t stock, std::size_t day,
                                               std::size_t lookback);

std::optional<DaySamples> day_samples(const FeaturePanel& features, const ReturnPanel* returns, std::size_t day,
                                      std::size_t lookback);

// Decision days t in `range` whose target day t+1 is also in `range`, so no
// sample reads a return outside it.
std::vector<DaySamples> collect_samples(const FeaturePanel& features, const ReturnPanel& returns, DayRange range,
                                        std::size_t lookback);

// argmin ||Xw - y||^2 + lambda ||w||^2 via the normal equations.
std::vector<double> fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda);
TrainedModel fit_ridge(const std::vector<DaySamples>& train, const PredictorSpec& spec, std::size_t n_features);

// sum_i (Y_i - r_i)^2 + eta * sum_i sum_j max(0, -(Y_i - Y_j)(r_i - r_j)),
// exact over all ordered pairs.
double composite_loss(std::span<const double> scores, std::span<const double> returns, double eta = 5.0);
// d/dY of composite_loss; the hinge subgradient at 0 is 0.
std::vector<double> composite_loss_gradient(std::span<const double> scores, std::span<const double> returns,
                                            double eta = 5.0);

// Training objective of the linear ranker: the mean over days of
// composite_loss(X_t w, r_{t+1}) / N_t.
class RankerObjective {
 public:
  RankerObjective(const std::vector<DaySamples>& days, double eta, std::size_t pair_samples = 0,
                  std::uint64_t seed = 0);

  double value(const Eigen::VectorXd& w) const;
  double value_and_gradient(const Eigen::VectorXd& w, Eigen::VectorXd& gradient) const;

 private:
  const std::vector<DaySamples>* days_;
  double eta_;
  // Per day, per stock: sampled partner indices (empty = all pairs).
  std::vector<std::vector<std::vector<std::uint32_t>>> partners_;
};

// Full-batch gradient descent from the ridge solution (or w = 0 without
// warm_start); keeps the weights of the epoch with
// the best mean validation IC and stops after `patience` epochs without
// improvement, or when no step (down to lr / 2^40) lowers the loss under
// line search. Throws NumericError if the loss becomes non-finite.
TrainedModel train_linear_ranker(const std::vector<DaySamples>& train, const std::vector<DaySamples>& valid,
                                 const PredictorSpec& spec, std::size_t n_features);

// Mean daily cross-sectional Pearson IC of X_t w against y_t.
double mean_sample_ic(const std::vector<DaySamples>& days, const Eigen::VectorXd& w);

struct MarketData {
  const FeaturePanel& features;
  const ReturnPanel& returns;
};

// Extension point for forecasting methods. score_day may read data up to and
// including `day` only.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual const PredictorSpec& spec() const = 0;
  virtual void fit(const MarketData& data, const DatasetSplit& split) = 0;
  // NaN marks stocks without a score.
  virtual std::vector<double> score_day(const MarketData& data, std::size_t day) const = 0;
  virtual TrainedModel model() const = 0;
};

std::unique_ptr<Predictor> make_predictor(const PredictorSpec& spec);
std::unique_ptr<Predictor> make_predictor(const TrainedModel& model);

ScorePanel predict_range(const Predictor& predictor, const MarketData& data, DayRange days);

std::string model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const std::string& text);

}  // namespace finbench
