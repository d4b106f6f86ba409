#include "finbench/predictors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "finbench/metrics.hpp"

namespace finbench {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::string_view to_string(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::CSM:
      return "CSM";
    case PredictorKind::BLSW:
      return "BLSW";
    case PredictorKind::Ridge:
      return "Ridge";
    case PredictorKind::LinearRanker:
      return "LinearRanker";
  }
  return "unknown";
}

PredictorKind parse_predictor_kind(std::string_view name) {
  // Case and underscores are ignored: "linear_ranker" == "LinearRanker".
  auto fold = [](std::string_view s) {
    std::string out;
    for (char c : s) {
      if (c != '_') out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
  };
  for (auto k : {PredictorKind::CSM, PredictorKind::BLSW, PredictorKind::Ridge, PredictorKind::LinearRanker}) {
    if (fold(to_string(k)) == fold(name)) return k;
  }
  throw ConfigError("unknown predictor kind '" + std::string(name) + "'");
}

void PredictorSpec::validate() const {
  if (lookback < 1) throw ConfigError("predictor lookback must be >= 1");
  if (window < 1) throw ConfigError("predictor window must be >= 1");
  if (!(eta >= 0.0)) throw ConfigError("eta must be >= 0");
  if (!(ridge_lambda > 0.0)) throw ConfigError("ridge lambda must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
}

std::string PredictorSpec::label() const { return name.empty() ? std::string(to_string(kind)) : name; }

std::vector<double> predict_csm(const ReturnPanel& returns, std::size_t day, std::size_t window) {
  if (window == 0) throw DataError("momentum window must be positive");
  if (day < window || day >= returns.n_days()) {
    throw DataError("momentum window of " + std::to_string(window) + " days exceeds history at day " +
                    std::to_string(day));
  }
  std::vector<double> out(returns.n_stocks(), kMissing);
  for (std::size_t i = 0; i < returns.n_stocks(); ++i) {
    double growth = 1.0;
    bool complete = true;
    for (std::size_t k = day + 1 - window; k <= day; ++k) {
      if (!returns.valid(i, k)) {
        complete = false;
        break;
      }
      growth *= 1.0 + returns.value(i, k);
    }
    if (complete) out[i] = growth - 1.0;
  }
  return out;
}

std::vector<double> predict_blsw(const ReturnPanel& returns, std::size_t day, std::size_t window) {
  auto s = predict_csm(returns, day, window);
  for (double& v : s) v = -v;
  return s;
}

std::optional<Eigen::VectorXd> window_features(const FeaturePanel& features, std::size_t stock, std::size_t day,
                                               std::size_t lookback) {
  if (day + 1 < lookback || day >= features.n_days()) return std::nullopt;
  const std::size_t f = features.n_features();
  Eigen::VectorXd x(static_cast<Eigen::Index>(lookback * f));
  const std::size_t first = day + 1 - lookback;
  for (std::size_t l = 0; l < lookback; ++l) {
    for (std::size_t k = 0; k < f; ++k) {
      const double v = features.at(stock, first + l, k);
      if (!std::isfinite(v)) return std::nullopt;
      x(static_cast<Eigen::Index>(l * f + k)) = v;
    }
  }
  return x;
}

std::optional<DaySamples> day_samples(const FeaturePanel& features, const ReturnPanel* returns, std::size_t day,
                                      std::size_t lookback) {
  const bool with_target = returns != nullptr;
  if (with_target && day + 1 >= returns->n_days()) return std::nullopt;
  std::vector<Eigen::VectorXd> rows;
  DaySamples out;
  out.day = day;
  std::vector<double> targets;
  for (std::size_t i = 0; i < features.n_stocks(); ++i) {
    if (with_target && !returns->valid(i, day + 1)) continue;
    auto x = window_features(features, i, day, lookback);
    if (!x) continue;
    rows.push_back(std::move(*x));
    out.stocks.push_back(i);
    if (with_target) targets.push_back(returns->value(i, day + 1));
  }
  if (rows.empty()) return std::nullopt;
  const auto d = rows.front().size();
  out.x.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r) out.x.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
  if (with_target) out.y = Eigen::Map<const Eigen::VectorXd>(targets.data(), static_cast<Eigen::Index>(targets.size()));
  return out;
}

std::vector<DaySamples> collect_samples(const FeaturePanel& features, const ReturnPanel& returns, DayRange range,
                                        std::size_t lookback) {
  std::vector<DaySamples> out;
  for (std::size_t t = range.begin; t + 1 < range.end; ++t) {
    if (auto s = day_samples(features, &returns, t, lookback)) out.push_back(std::move(*s));
  }
  return out;
}

std::vector<double> fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("ridge lambda must be > 0");
  if (x.rows() != y.size()) throw DataError("ridge: design and target sizes differ");
  if (!x.allFinite() || !y.allFinite()) throw DataError("ridge: non-finite features or targets");
  if (x.rows() < x.cols() + 1) {
    throw DataError("ridge: need at least " + std::to_string(x.cols() + 1) + " samples, got " +
                    std::to_string(x.rows()));
  }
  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += lambda;
  const Eigen::VectorXd w = gram.ldlt().solve(x.transpose() * y);
  return {w.data(), w.data() + w.size()};
}

TrainedModel fit_ridge(const std::vector<DaySamples>& train, const PredictorSpec& spec, std::size_t n_features) {
  Eigen::Index rows = 0;
  for (const auto& d : train) rows += d.x.rows();
  const auto cols = static_cast<Eigen::Index>(spec.lookback * n_features);
  Eigen::MatrixXd x(rows, cols);
  Eigen::VectorXd y(rows);
  Eigen::Index r = 0;
  for (const auto& d : train) {
    x.middleRows(r, d.x.rows()) = d.x;
    y.segment(r, d.y.size()) = d.y;
    r += d.x.rows();
  }
  TrainedModel m;
  m.spec = spec;
  m.n_features = n_features;
  m.weights = fit_ridge(x, y, spec.ridge_lambda);
  return m;
}

double composite_loss(std::span<const double> scores, std::span<const double> returns, double eta) {
  if (scores.size() != returns.size()) throw DataError("composite_loss: length mismatch");
  const std::size_t n = scores.size();
  double pointwise = 0.0;
  for (std::size_t i = 0; i < n; ++i) pointwise += (scores[i] - returns[i]) * (scores[i] - returns[i]);
  double pairwise = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      pairwise += std::max(0.0, -(scores[i] - scores[j]) * (returns[i] - returns[j]));
    }
  }
  return pointwise + eta * pairwise;
}

std::vector<double> composite_loss_gradient(std::span<const double> scores, std::span<const double> returns,
                                            double eta) {
  if (scores.size() != returns.size()) throw DataError("composite_loss_gradient: length mismatch");
  const std::size_t n = scores.size();
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = 2.0 * (scores[i] - returns[i]);
  // (i, j) and (j, i) carry the same hinge, so each unordered pair counts twice.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dr = returns[i] - returns[j];
      if ((scores[i] - scores[j]) * dr < 0.0) {
        g[i] -= 2.0 * eta * dr;
        g[j] += 2.0 * eta * dr;
      }
    }
  }
  return g;
}

RankerObjective::RankerObjective(const std::vector<DaySamples>& days, double eta, std::size_t pair_samples,
                                 std::uint64_t seed)
    : days_(&days), eta_(eta) {
  if (pair_samples == 0) return;
  partners_.resize(days.size());
  for (std::size_t d = 0; d < days.size(); ++d) {
    const auto n = static_cast<std::size_t>(days[d].x.rows());
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(days[d].day)));
    partners_[d].resize(n);
    if (n < 2) continue;
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n - 2));
    for (std::size_t i = 0; i < n; ++i) {
      auto& p = partners_[d][i];
      p.resize(pair_samples);
      for (auto& j : p) {
        j = pick(rng);
        if (j >= i) ++j;  // skip self
      }
    }
  }
}

double RankerObjective::value(const Eigen::VectorXd& w) const {
  Eigen::VectorXd g;
  return value_and_gradient(w, g);
}

double RankerObjective::value_and_gradient(const Eigen::VectorXd& w, Eigen::VectorXd& gradient) const {
  gradient = Eigen::VectorXd::Zero(w.size());
  if (days_->empty()) return 0.0;
  double total = 0.0;
  for (std::size_t d = 0; d < days_->size(); ++d) {
    const auto& day = (*days_)[d];
    const Eigen::VectorXd y_hat = day.x * w;
    const auto n = static_cast<std::size_t>(y_hat.size());
    const std::span<const double> ys(y_hat.data(), n);
    const std::span<const double> rs(day.y.data(), n);
    double loss = 0.0;
    std::vector<double> g;
    if (partners_.empty()) {
      loss = composite_loss(ys, rs, eta_);
      g = composite_loss_gradient(ys, rs, eta_);
    } else {
      g.assign(n, 0.0);
      double pairwise = 0.0;
      const double scale = n > 1 ? static_cast<double>(n - 1) / static_cast<double>(partners_[d][0].size()) : 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        loss += (ys[i] - rs[i]) * (ys[i] - rs[i]);
        g[i] += 2.0 * (ys[i] - rs[i]);
        for (std::uint32_t j : partners_[d][i]) {
          const double dr = rs[i] - rs[j];
          const double h = -(ys[i] - ys[j]) * dr;
          if (h > 0.0) {
            pairwise += h;
            g[i] -= eta_ * scale * dr;
            g[j] += eta_ * scale * dr;
          }
        }
      }
      loss += eta_ * scale * pairwise;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    total += loss * inv_n;
    const Eigen::Map<const Eigen::VectorXd> gy(g.data(), static_cast<Eigen::Index>(n));
    gradient.noalias() += day.x.transpose() * gy * inv_n;
  }
  const double inv_days = 1.0 / static_cast<double>(days_->size());
  gradient *= inv_days;
  return total * inv_days;
}

double mean_sample_ic(const std::vector<DaySamples>& days, const Eigen::VectorXd& w) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& d : days) {
    const Eigen::VectorXd y_hat = d.x * w;
    const double c = pearson(std::span<const double>(y_hat.data(), static_cast<std::size_t>(y_hat.size())),
                             std::span<const double>(d.y.data(), static_cast<std::size_t>(d.y.size())));
    if (std::isfinite(c)) sum += c, ++count;
  }
  return count ? sum / static_cast<double>(count) : kMissing;
}

TrainedModel train_linear_ranker(const std::vector<DaySamples>& train, const std::vector<DaySamples>& valid,
                                 const PredictorSpec& spec, std::size_t n_features) {
  spec.validate();
  if (train.empty()) throw DataError("linear ranker: empty training set");
  const auto dim = static_cast<Eigen::Index>(spec.lookback * n_features);
  RankerObjective objective(train, spec.eta, spec.pair_samples, spec.seed);

  TrainedModel m;
  m.spec = spec;
  m.n_features = n_features;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
  Eigen::Index rows = 0;
  for (const auto& d : train) rows += d.x.rows();
  // At w = 0 all scores tie and every direction switches hinges on at first
  // order, so plain descent from zero usually cannot move.
  if (spec.warm_start && rows > dim) {
    const auto ridge = fit_ridge(train, spec, n_features).weights;
    w = Eigen::Map<const Eigen::VectorXd>(ridge.data(), dim);
  }
  Eigen::VectorXd best = w;
  Eigen::VectorXd grad;
  double best_ic = mean_sample_ic(valid, w);
  bool have_best = std::isfinite(best_ic);
  if (!have_best) best_ic = -std::numeric_limits<double>::infinity();
  m.best_epoch = 0;  // 0 = the initial weights
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= spec.epochs; ++epoch) {
    const double loss = objective.value_and_gradient(w, grad);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      throw NumericError("linear ranker diverged at epoch " + std::to_string(epoch) + " (loss " +
                         std::to_string(loss) + "); lower the learning rate");
    }
    bool stalled = false;
    if (spec.line_search) {
      double step = spec.learning_rate;
      Eigen::VectorXd next = w - step * grad;
      int halvings = 0;
      for (; halvings < 40 && !(objective.value(next) <= loss); ++halvings) {
        step *= 0.5;
        next = w - step * grad;
      }
      if (halvings == 40) {
        stalled = true;
      } else {
        w = std::move(next);
      }
    } else {
      w -= spec.learning_rate * grad;
    }
    if (!w.allFinite()) throw NumericError("linear ranker weights became non-finite at epoch " + std::to_string(epoch));
    const double ic = mean_sample_ic(valid, w);
    m.log.push_back({epoch, loss, ic});
    if (std::isfinite(ic) && ic > best_ic) {
      best_ic = ic;
      best = w;
      have_best = true;
      m.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= spec.patience && have_best) {
      break;
    }
    if (stalled) break;
  }
  if (!have_best) {
    best = w;
    m.best_epoch = m.log.size();
  }
  m.weights.assign(best.data(), best.data() + best.size());
  return m;
}

namespace {

class MomentumPredictor final : public Predictor {
 public:
  explicit MomentumPredictor(PredictorSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

  const PredictorSpec& spec() const override { return spec_; }
  void fit(const MarketData& data, const DatasetSplit&) override { n_features_ = data.features.n_features(); }
  std::vector<double> score_day(const MarketData& data, std::size_t day) const override {
    if (day < spec_.window) return std::vector<double>(data.returns.n_stocks(), kMissing);
    return spec_.kind == PredictorKind::CSM ? predict_csm(data.returns, day, spec_.window)
                                            : predict_blsw(data.returns, day, spec_.window);
  }
  TrainedModel model() const override {
    TrainedModel m;
    m.spec = spec_;
    m.n_features = n_features_;
    return m;
  }

 private:
  PredictorSpec spec_;
  std::size_t n_features_ = 0;
};

class LinearPredictor final : public Predictor {
 public:
  explicit LinearPredictor(PredictorSpec spec) { model_.spec = std::move(spec); model_.spec.validate(); }
  explicit LinearPredictor(TrainedModel model) : model_(std::move(model)) {
    if (model_.weights.size() != model_.spec.lookback * model_.n_features) {
      throw ArchiveError("model weight length does not match lookback * features");
    }
  }

  const PredictorSpec& spec() const override { return model_.spec; }

  void fit(const MarketData& data, const DatasetSplit& split) override {
    const std::size_t f = data.features.n_features();
    const auto train = collect_samples(data.features, data.returns, split.train, model_.spec.lookback);
    if (model_.spec.kind == PredictorKind::Ridge) {
      model_ = fit_ridge(train, model_.spec, f);
    } else {
      const auto valid = collect_samples(data.features, data.returns, split.valid, model_.spec.lookback);
      model_ = train_linear_ranker(train, valid, model_.spec, f);
    }
  }

  std::vector<double> score_day(const MarketData& data, std::size_t day) const override {
    std::vector<double> out(data.features.n_stocks(), kMissing);
    if (model_.weights.empty()) return out;
    const Eigen::Map<const Eigen::VectorXd> w(model_.weights.data(), static_cast<Eigen::Index>(model_.weights.size()));
    for (std::size_t i = 0; i < data.features.n_stocks(); ++i) {
      if (auto x = window_features(data.features, i, day, model_.spec.lookback)) out[i] = x->dot(w);
    }
    return out;
  }

  TrainedModel model() const override { return model_; }

 private:
  TrainedModel model_;
};

}  // namespace

std::unique_ptr<Predictor> make_predictor(const PredictorSpec& spec) {
  if (spec.kind == PredictorKind::CSM || spec.kind == PredictorKind::BLSW) {
    return std::make_unique<MomentumPredictor>(spec);
  }
  return std::make_unique<LinearPredictor>(spec);
}

std::unique_ptr<Predictor> make_predictor(const TrainedModel& model) {
  if (model.spec.kind == PredictorKind::CSM || model.spec.kind == PredictorKind::BLSW) {
    return std::make_unique<MomentumPredictor>(model.spec);
  }
  return std::make_unique<LinearPredictor>(model);
}

ScorePanel predict_range(const Predictor& predictor, const MarketData& data, DayRange days) {
  ScorePanel out(data.returns.n_stocks(), data.returns.n_days());
  for (std::size_t t = days.begin; t < days.end; ++t) out.set_day(t, predictor.score_day(data, t));
  return out;
}

namespace {

nlohmann::ordered_json spec_json(const PredictorSpec& s) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(s.kind);
  j["name"] = s.label();
  j["lookback"] = s.lookback;
  j["window"] = s.window;
  j["ridge_lambda"] = s.ridge_lambda;
  j["learning_rate"] = s.learning_rate;
  j["epochs"] = s.epochs;
  j["patience"] = s.patience;
  j["eta"] = s.eta;
  j["pair_samples"] = s.pair_samples;
  j["line_search"] = s.line_search;
  j["warm_start"] = s.warm_start;
  j["seed"] = s.seed;
  return j;
}

}  // namespace

std::string model_to_json(const TrainedModel& m) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(m.spec.kind);
  j["hyperparameters"] = spec_json(m.spec);
  j["n_features"] = m.n_features;
  j["weights"] = m.weights;
  j["best_epoch"] = m.best_epoch;
  nlohmann::ordered_json log = nlohmann::ordered_json::array();
  for (const auto& e : m.log) {
    nlohmann::ordered_json row;
    row["epoch"] = e.epoch;
    row["train_loss"] = e.train_loss;
    row["valid_ic"] = std::isfinite(e.valid_ic) ? nlohmann::ordered_json(e.valid_ic) : nlohmann::ordered_json(nullptr);
    log.push_back(std::move(row));
  }
  j["training_log"] = std::move(log);
  return j.dump(2);
}

TrainedModel model_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    TrainedModel m;
    const auto& h = j.at("hyperparameters");
    m.spec.kind = parse_predictor_kind(j.at("kind").get<std::string>());
    m.spec.name = h.at("name").get<std::string>();
    m.spec.lookback = h.at("lookback").get<std::size_t>();
    m.spec.window = h.at("window").get<std::size_t>();
    m.spec.ridge_lambda = h.at("ridge_lambda").get<double>();
    m.spec.learning_rate = h.at("learning_rate").get<double>();
    m.spec.epochs = h.at("epochs").get<std::size_t>();
    m.spec.patience = h.at("patience").get<std::size_t>();
    m.spec.eta = h.at("eta").get<double>();
    m.spec.pair_samples = h.at("pair_samples").get<std::size_t>();
    m.spec.line_search = h.value("line_search", true);
    m.spec.warm_start = h.value("warm_start", true);
    m.spec.seed = h.at("seed").get<std::uint64_t>();
    m.n_features = j.at("n_features").get<std::size_t>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.best_epoch = j.at("best_epoch").get<std::size_t>();
    for (const auto& row : j.at("training_log")) {
      m.log.push_back({row.at("epoch").get<std::size_t>(), row.at("train_loss").get<double>(),
                       row.at("valid_ic").is_null() ? kMissing : row.at("valid_ic").get<double>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveError(std::string("model JSON: ") + e.what());
  }
}

}  // namespace finbench
