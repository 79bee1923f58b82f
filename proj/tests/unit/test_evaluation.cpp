#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "dbat/error.hpp"
#include "dbat/evaluation.hpp"
#include "gen.hpp"

using namespace dbat;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Classifier linear(double bias1) {
  ClassifierSpec s{2, {}, 2, Activation::relu};
  return Classifier(s, {Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor::vector({0, bias1})}, 0);
}

}  // namespace

TEST_CASE("accuracy examples") {
  const Tensor p = Tensor::matrix(4, 2, {0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7});
  const std::vector<std::size_t> all{0, 1, 0, 1}, half{0, 1, 1, 0}, none{1, 0, 1, 0};
  CHECK(accuracy(p, all) == 1.0);
  CHECK(accuracy(p, half) == 0.5);
  CHECK(accuracy(p, none) == 0.0);
  const std::vector<std::size_t> short_labels{0};
  CHECK_THROWS_AS(accuracy(p, short_labels), ShapeError);
}

TEST_CASE("aggregate_ensemble: mean of members, argmax of the sum") {
  const Tensor x = Tensor::matrix(3, 2, {0.1, 0.3, 2, -1, -0.5, 0.5});
  const std::vector<Classifier> ens{linear(0), linear(1), linear(-2)};
  const Tensor agg = aggregate_ensemble(ens, x);
  for (std::size_t i = 0; i < 3; ++i) {
    double row = 0;
    for (std::size_t j = 0; j < 2; ++j) {
      double expect = 0;
      for (const auto& m : ens) expect += m.predict(x).at(i, j);
      CHECK(agg.at(i, j) == doctest::Approx(expect / 3));
      row += agg.at(i, j);
    }
    CHECK(row == doctest::Approx(1.0));
  }
  const std::vector<Classifier> one{linear(0)};
  CHECK(aggregate_ensemble(one, x) == linear(0).predict(x));
  CHECK_THROWS_AS(aggregate_ensemble(std::span<const Classifier>{}, x), ContractError);
}

TEST_CASE("entropy examples") {
  const Tensor p = Tensor::matrix(3, 2, {0.5, 0.5, 1.0, 0.0, 0.9, 0.1});
  const auto h = entropy(p);
  CHECK(h[0] == doctest::Approx(std::log(2.0)));
  CHECK(h[1] == 0.0);
  CHECK(h[2] == doctest::Approx(-(0.9 * std::log(0.9) + 0.1 * std::log(0.1))));
  const Tensor u = Tensor::matrix(1, 4, {0.25, 0.25, 0.25, 0.25});
  CHECK(entropy(u)[0] == doctest::Approx(std::log(4.0)));
}

TEST_CASE("entropy property: bounded by log k") {
  gen::Gen g(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = g.size(2, 6);
    const Tensor p = g.distributions(5, k, 0.0);
    for (double h : entropy(p)) {
      CHECK(h >= 0.0);
      CHECK(h <= std::log(static_cast<double>(k)) + 1e-12);
    }
  }
}

TEST_CASE("disagreement rate") {
  const Tensor a = Tensor::matrix(4, 2, {0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.6, 0.4});
  const Tensor b = Tensor::matrix(4, 2, {0.1, 0.9, 0.3, 0.7, 0.9, 0.1, 0.7, 0.3});
  CHECK(disagreement_rate(a, b) == 0.25);  // the tie in row 2 counts as agreement
  CHECK(disagreement_rate(a, a) == 0.0);
  CHECK_THROWS_AS(disagreement_rate(a, Tensor::matrix(1, 2, {0.5, 0.5})), ShapeError);
  gen::Gen g(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor p = g.distributions(10, 3, 0.01), q = g.distributions(10, 3, 0.01);
    CHECK(disagreement_rate(p, q) == disagreement_rate(q, p));
  }
}

TEST_CASE("histograms") {
  const std::vector<double> v{0.0, 0.05, 0.1, 0.55, 0.95, 1.0, 0.9999};
  const auto h = histogram_of(v);
  REQUIRE(h.edges.size() == 11);
  REQUIRE(h.counts.size() == 10);
  CHECK(h.counts[0] == 2);
  CHECK(h.counts[1] == 1);
  CHECK(h.counts[5] == 1);
  CHECK(h.counts[9] == 3);  // 1.0 lands in the closed last bin
  CHECK(h.total() == 7);
  CHECK(h.mass_at_or_above(0.9) == doctest::Approx(3.0 / 7.0));
  CHECK(histogram_of(std::vector<double>{}).mass_at_or_above(0.5) == 0.0);

  const Tensor p = Tensor::matrix(3, 2, {0.95, 0.05, 0.5, 0.5, 0.1, 0.9});
  CHECK(confident_fraction(p, 0.9) == doctest::Approx(1.0 / 3.0));  // strictly above
  CHECK(confident_fraction(p, 0.89) == doctest::Approx(2.0 / 3.0));
  CHECK(confident_fraction(p, 0.95) == 0.0);

  UnlabeledDataset ood;
  ood.features = Tensor::matrix(2, 2, {5, -5, 0, 0});
  const std::vector<Classifier> ens{linear(0)};
  const auto ch = confidence_histogram(ens, ood);
  CHECK(ch.total() == 2);
  CHECK(ch.counts[5] == 1);  // the tie at 0.5
  CHECK(ch.counts[9] == 1);
}

TEST_CASE("path entropy profile") {
  const std::vector<double> x0{-1, 0}, x1{1, 0};
  const auto path = gen_interpolation_path(x0, x1, default_t_grid());
  const std::vector<Classifier> ens{linear(0)};
  const auto prof = path_entropy_profile(ens, path);
  REQUIRE(prof.size() == 121);
  CHECK(prof.front().t == -1.0);
  CHECK(prof.back().t == 2.0);
  UnlabeledDataset no_t;
  no_t.features = Tensor::matrix(1, 2, {0, 0});
  CHECK_THROWS_AS(path_entropy_profile(ens, no_t), ContractError);
}

TEST_CASE("metrics and histogram CSV") {
  const fs::path dir = fs::temp_directory_path() / "dbat_eval_csv";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::vector<MetricsRecord> rows{{"r1", "0", "train", "accuracy", 0.5, 3},
                                        {"r1", "ensemble", "ood", "mean_entropy", -0.0, -1},
                                        {"r1", "1", "val", "x", 0.1, -1}};
  write_metrics_csv(rows, dir / "m.csv");
  CHECK(slurp(dir / "m.csv") ==
        "run_id,model_index,split,metric,value,epoch\n"
        "r1,0,train,accuracy,0.5,3\n"
        "r1,ensemble,ood,mean_entropy,0,-1\n"
        "r1,1,val,x,0.10000000000000001,-1\n");
  const std::vector<MetricsRecord> bad{{"r", "0", "train", "loss", std::numeric_limits<double>::infinity(), -1}};
  CHECK_THROWS_AS(write_metrics_csv(bad, dir / "bad.csv"), NumericError);

  write_histogram_csv(histogram_of(std::vector<double>{0.25, 0.95}), dir / "h.csv");
  const auto text = slurp(dir / "h.csv");
  CHECK(text.rfind("bin_lo,bin_hi,count\n0,0.10000000000000001,0\n", 0) == 0);
  CHECK(text.find("\n0.20000000000000001,0.29999999999999999,1\n") != std::string::npos);

  CHECK(format_number(1.0) == "1");
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(0.1) == "0.10000000000000001");
  fs::remove_all(dir);
}
