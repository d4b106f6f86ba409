#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "finbench/panel.hpp"
#include "fixtures.hpp"

using namespace finbench;
using namespace fbtest;

namespace {

PricePanel::Data small_data() {
  PricePanel::Data d;
  d.stock_ids = {"A", "B"};
  d.calendar = {"2020-01-02", "2020-01-03"};
  d.feature_names = {"open", "high", "low", "close", "volume"};
  d.features = {10, 11, 9, 10.5, 100, 10.5, 12, 10, 11, 200, 20, 21, 19, 20, 50, 20, 20, 18, 19, 60};
  return d;
}

}  // namespace

TEST(PricePanel, CreateAcceptsValidData) {
  const auto p = PricePanel::create(small_data());
  EXPECT_EQ(p.n_stocks(), 2u);
  EXPECT_EQ(p.n_days(), 2u);
  EXPECT_DOUBLE_EQ(p.close(1, 1), 19.0);
  EXPECT_TRUE(p.tradable(0, 0));
}

TEST(PricePanel, RejectsBrokenInvariants) {
  {
    auto d = small_data();
    d.calendar = {"2020-01-03", "2020-01-02"};
    EXPECT_THROW(PricePanel::create(d), DataError);
  }
  {
    auto d = small_data();
    d.stock_ids = {"A", "A"};
    EXPECT_THROW(PricePanel::create(d), DataError);
  }
  {
    auto d = small_data();
    d.feature_names = {"open", "high", "low", "close", "turnover"};
    EXPECT_THROW(PricePanel::create(d), DataError);
  }
  {
    auto d = small_data();
    d.features[3] = -1.0;  // close
    EXPECT_THROW(PricePanel::create(d), DataError);
  }
  {
    auto d = small_data();
    d.features[1] = 8.0;  // high < low
    EXPECT_THROW(PricePanel::create(d), DataError);
  }
  {
    auto d = small_data();
    d.features[0] = 30.0;  // open above high
    EXPECT_THROW(PricePanel::create(d), DataError);
  }
  {
    auto d = small_data();
    d.features[4] = -5.0;  // volume
    EXPECT_THROW(PricePanel::create(d), DataError);
  }
  {
    auto d = small_data();
    d.features[3] = INFINITY;
    EXPECT_THROW(PricePanel::create(d), DataError);
  }
}

TEST(PricePanel, MissingCellsAreAbsent) {
  auto d = small_data();
  for (int k = 5; k < 10; ++k) d.features[k] = kMissing;
  const auto p = PricePanel::create(d);
  EXPECT_FALSE(p.present(0, 1));
  EXPECT_FALSE(p.tradable(0, 1));
  EXPECT_TRUE(p.present(1, 1));
}

TEST(Returns, MatchScalarLoop) {
  const auto p = regime_panel(20, 60, RegimeSpec{MovementPattern::Volatile, 0.0, 0.03, 0.0, 0.0, 0.0}, 3);
  const auto r = compute_returns(p);
  for (std::size_t i = 0; i < p.n_stocks(); ++i) {
    EXPECT_FALSE(r.valid(i, 0));
    for (std::size_t t = 1; t < p.n_days(); ++t) {
      const double expect = p.close(i, t) / p.close(i, t - 1) - 1.0;
      ASSERT_TRUE(r.valid(i, t));
      EXPECT_NEAR(r.value(i, t), expect, 1e-15);
    }
  }
}

TEST(Returns, HandValuesAndMaskPropagation) {
  const auto p = panel_from_closes({{100, 110, 99}, {50, NAN, 60}});
  const auto r = compute_returns(p);
  EXPECT_DOUBLE_EQ(r.value(0, 1), 0.1);
  EXPECT_NEAR(r.value(0, 2), -0.1, 1e-15);
  EXPECT_FALSE(r.valid(1, 1));
  EXPECT_FALSE(r.valid(1, 2));
}

TEST(Normalize, DailyZScores) {
  const auto p = regime_panel(30, 20, RegimeSpec{MovementPattern::Volatile, 0.0, 0.02, 0.0, 0.0, 0.0}, 5);
  const auto z = cross_sectional_normalize(p);
  for (std::size_t t = 0; t < z.n_days(); ++t) {
    for (std::size_t f = 0; f < z.n_features(); ++f) {
      double s = 0, s2 = 0;
      for (std::size_t i = 0; i < z.n_stocks(); ++i) s += z.at(i, t, f), s2 += z.at(i, t, f) * z.at(i, t, f);
      EXPECT_NEAR(s / 30, 0.0, 1e-12);
      EXPECT_NEAR(s2 / 30, 1.0, 1e-12);  // population variance
    }
  }
}

TEST(Normalize, ScaleInvariantPerDay) {
  std::vector<std::vector<double>> closes{{10, 11, 12}, {20, 19, 21}, {5, 6, 4}, {7, 7.5, 8}};
  auto scaled = closes;
  for (auto& row : scaled) row[1] *= 7.0;
  const auto a = cross_sectional_normalize(panel_from_closes(closes));
  const auto b = cross_sectional_normalize(panel_from_closes(scaled));
  const std::size_t close = 3;
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a.at(i, 1, close), b.at(i, 1, close), 1e-12);
}

TEST(Normalize, Idempotent) {
  const auto p = regime_panel(25, 15, RegimeSpec{MovementPattern::Volatile, 0.0, 0.02, 0.0, 0.0, 0.0}, 8);
  const auto once = cross_sectional_normalize(p);
  const auto twice = cross_sectional_normalize(once);
  for (std::size_t k = 0; k < once.values.size(); ++k) EXPECT_NEAR(once.values[k], twice.values[k], 1e-9);
}

TEST(Normalize, DegenerateDayGivesZeroAndWarning) {
  const auto p = panel_from_closes({{10, 11}, {10, 12}, {10, 13}});
  Diagnostics diag;
  const auto z = cross_sectional_normalize(p, {}, &diag);
  EXPECT_EQ(z.at(0, 0, 3), 0.0);
  EXPECT_FALSE(diag.empty());
}

TEST(Normalize, SelectedFeaturesOnly) {
  const auto p = regime_panel(10, 5, RegimeSpec{MovementPattern::Volatile, 0.0, 0.02, 0.0, 0.0, 0.0}, 9);
  const auto z = cross_sectional_normalize(p, NormalizationOptions{{"close"}});
  const std::size_t vol = *p.feature_index("volume");
  EXPECT_EQ(z.at(2, 3, vol), p.feature(2, 3, vol));
  EXPECT_NE(z.at(2, 3, 3), p.close(2, 3));
  EXPECT_THROW(cross_sectional_normalize(p, NormalizationOptions{{"nope"}}), ConfigError);
}

TEST(Normalize, MaskedCellsStayMaskedAndAreExcluded) {
  const auto p = panel_from_closes({{10, 11}, {NAN, 12}, {14, 13}, {12, 9}});
  const auto z = cross_sectional_normalize(p);
  EXPECT_TRUE(std::isnan(z.at(1, 0, 3)));
  double s = 0;
  for (std::size_t i : {0u, 2u, 3u}) s += z.at(i, 0, 3);
  EXPECT_NEAR(s, 0.0, 1e-12);
}

TEST(Leakage, FutureValuesDoNotReachThePast) {
  const auto p = regime_panel(15, 40, RegimeSpec{MovementPattern::Volatile, 0.0, 0.02, 0.0, 0.0, 0.0}, 10);
  const auto q = poison_after(p, 25);
  const auto rp = compute_returns(p), rq = compute_returns(q);
  const auto zp = cross_sectional_normalize(p), zq = cross_sectional_normalize(q);
  for (std::size_t i = 0; i < 15; ++i) {
    for (std::size_t t = 0; t < 25; ++t) {
      EXPECT_EQ(rp.valid(i, t), rq.valid(i, t));
      if (rp.valid(i, t)) {
        EXPECT_EQ(rp.value(i, t), rq.value(i, t));
      }
      for (std::size_t f = 0; f < zp.n_features(); ++f) EXPECT_EQ(zp.at(i, t, f), zq.at(i, t, f));
    }
  }
}

TEST(Split, DefaultAndCustomRatioExamples) {
  const auto s250 = split_chronological(250);
  EXPECT_EQ(s250.train, (DayRange{0, 175}));
  EXPECT_EQ(s250.valid, (DayRange{175, 200}));
  EXPECT_EQ(s250.test, (DayRange{200, 250}));
  const auto s10 = split_chronological(10);
  EXPECT_EQ(s10.train.size(), 7u);
  EXPECT_EQ(s10.valid.size(), 1u);
  EXPECT_EQ(s10.test.size(), 2u);
  const auto s101 = split_chronological(101);
  EXPECT_EQ(s101.train.size() + s101.valid.size() + s101.test.size(), 101u);
}

TEST(Split, ExhaustiveWithinOneDayOfRatio) {
  for (std::size_t t = 10; t <= 400; ++t) {
    const auto s = split_chronological(t);
    ASSERT_EQ(s.train.begin, 0u);
    ASSERT_EQ(s.train.end, s.valid.begin);
    ASSERT_EQ(s.valid.end, s.test.begin);
    ASSERT_EQ(s.test.end, t);
    ASSERT_GE(s.valid.size(), 1u);
    ASSERT_GE(s.test.size(), 1u);
    const double n = static_cast<double>(t);
    EXPECT_LE(std::abs(static_cast<double>(s.train.size()) - 0.7 * n), 1.0) << t;
    EXPECT_LE(std::abs(static_cast<double>(s.valid.size()) - 0.1 * n), 1.0) << t;
    EXPECT_LE(std::abs(static_cast<double>(s.test.size()) - 0.2 * n), 1.0) << t;
  }
}

TEST(Split, RandomLengthsNeverOverlap) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> len(10, 100000);
  for (int k = 0; k < 500; ++k) {
    const std::size_t t = len(rng);
    const auto s = split_chronological(t, {7, 1, 2}, 13);
    EXPECT_EQ(s.train.begin, 13u);
    EXPECT_LT(s.train.begin, s.train.end);
    EXPECT_EQ(s.train.end, s.valid.begin);
    EXPECT_EQ(s.valid.end, s.test.begin);
    EXPECT_EQ(s.test.end, 13 + t);
  }
}

TEST(Split, TooShortThrows) {
  EXPECT_THROW(split_chronological(9), Error);
  EXPECT_THROW(split_chronological(0), Error);
}

TEST(PricePanel, SelectAndSlice) {
  const auto p = regime_panel(6, 12, RegimeSpec{MovementPattern::Volatile, 0.0, 0.02, 0.0, 0.0, 0.0}, 12);
  const std::vector<std::size_t> pick{4, 1};
  const auto s = p.select_stocks(pick);
  ASSERT_EQ(s.n_stocks(), 2u);
  EXPECT_EQ(s.stock_ids()[0], p.stock_ids()[1]);
  EXPECT_EQ(s.close(1, 7), p.close(4, 7));
  const auto d = p.slice_days({3, 9});
  EXPECT_EQ(d.n_days(), 6u);
  EXPECT_EQ(d.calendar()[0], p.calendar()[3]);
  EXPECT_EQ(d.close(5, 5), p.close(5, 8));
}
