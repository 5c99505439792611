#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "oracles.hpp"

using namespace omnineg;
using Batch = TripletBatchEmb<double>;

namespace {

const double kLn1pEm1 = std::log1p(std::exp(-1.0));  // 0.313262

MatrixXr rows(std::initializer_list<std::initializer_list<double>> r) {
  MatrixXr m(r.size(), r.begin()->size());
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index k = 0;
    for (double v : row) m(i, k++) = v;
    ++i;
  }
  return m;
}

Batch batch(const MatrixXr& i, const MatrixXr& c, const MatrixXr& n) {
  return {EmbeddingBatch<double>(i), EmbeddingBatch<double>(c), EmbeddingBatch<double>(n)};
}

Batch random_batch(std::size_t b, std::size_t d, std::mt19937_64& rng) {
  return batch(oracle::unit_rows(b, d, rng), oracle::unit_rows(b, d, rng), oracle::unit_rows(b, d, rng));
}

const auto one = Temperature<double>::fixed(1.0);

}  // namespace

TEST_CASE("frozen values") {
  const auto eye = rows({{1, 0}, {0, 1}});
  CHECK(kLn1pEm1 == doctest::Approx(0.313262).epsilon(1e-6));

  const EmbeddingBatch<double> e(eye);
  CHECK(info_nce(e, e, one).value == doctest::Approx(kLn1pEm1).epsilon(1e-14));
  CHECK(loss_p2(batch(eye, eye, eye), one).value == doctest::Approx(kLn1pEm1).epsilon(1e-14));
  CHECK(loss_a1(batch(eye, eye, eye), one).value == doctest::Approx(kLn1pEm1).epsilon(1e-14));

  const auto i = rows({{1, 0}}), c = rows({{1, 0}}), n = rows({{0, 1}});
  CHECK(loss_p1(batch(i, c, n), one).value == doctest::Approx(kLn1pEm1).epsilon(1e-14));
  CHECK(loss_p3(batch(i, c, n), one).value == doctest::Approx(kLn1pEm1).epsilon(1e-14));
  CHECK(loss_p2(batch(i, c, n), one).value == 0.0);
  CHECK(presence_objective(batch(i, c, n), one).value == doctest::Approx(0.208841).epsilon(1e-6));

  // equal positive and negative similarity
  CHECK(loss_p1(batch(i, c, c), one).value == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  const Margin m9(0.9);
  CHECK(loss_a3(batch(i, c, c), m9).value == doctest::Approx(1.9).epsilon(1e-15));
  const double th = std::acos(0.5), tw = std::acos(-0.95);
  const auto caps = rows({{1, 0}, {1, 0}});
  const auto negs = rows({{std::cos(th), std::sin(th)}, {std::cos(tw), std::sin(tw)}});
  CHECK(loss_a3(batch(caps, caps, negs), m9).value == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(absence_objective(batch(i, c, n), one, Margin(0.0)).value == 0.0);

  const auto single = rows({{0.6, 0.8}});
  CHECK(info_nce(EmbeddingBatch<double>(single), EmbeddingBatch<double>(rows({{1, 0}})), one).value == 0.0);
}

TEST_CASE("loss values match the direct-summation oracle") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> tau_dist(0.5, 30.0), margin_dist(0.0, 1.0);
  for (std::size_t b : {1, 2, 4, 8}) {
    for (std::size_t d : {2, 8, 16}) {
      for (int trial = 0; trial < 10; ++trial) {
        const auto pb = random_batch(b, d, rng);
        const auto tau = Temperature<double>::learned(tau_dist(rng));
        const Margin m(margin_dist(rng));
        const auto I = oracle::rows_of(pb.images.matrix()), C = oracle::rows_of(pb.captions.matrix()),
                   N = oracle::rows_of(pb.negated.matrix());
        const double t = tau.value();
        CHECK(std::abs(info_nce(pb.images, pb.captions, tau).value - oracle::info_nce(I, C, t)) <= 1e-10);
        CHECK(std::abs(loss_p1(pb, tau).value - oracle::p1(I, C, N, t)) <= 1e-10);
        CHECK(std::abs(loss_p2(pb, tau).value - oracle::p2(I, C, N, t)) <= 1e-10);
        CHECK(std::abs(loss_p3(pb, tau).value - oracle::p3(I, C, N, t)) <= 1e-10);
        CHECK(std::abs(loss_a1(pb, tau).value - oracle::a1(I, C, N, t)) <= 1e-10);
        CHECK(std::abs(loss_a2(pb, tau).value - oracle::a2(I, C, N, t)) <= 1e-10);
        CHECK(std::abs(loss_a3(pb, m).value - oracle::a3(C, N, m.value())) <= 1e-10);
        CHECK(std::abs(loss_a3(pb, m, std::optional<Temperature<double>>(tau)).value - oracle::a3(C, N, m.value(), t)) <= 1e-10);
        CHECK(std::abs(presence_objective(pb, tau).value - oracle::presence(I, C, N, t)) <= 1e-10);
        CHECK(std::abs(absence_objective(pb, tau, m).value - oracle::absence(I, C, N, t, m.value())) <= 1e-10);
      }
    }
  }
}

TEST_CASE("total is the sum of the objectives and batches may differ in size") {
  std::mt19937_64 rng(22);
  const auto pb = random_batch(4, 8, rng);
  const auto ab = random_batch(6, 8, rng);
  const Temperature<double> tau;
  const Margin m(0.9);
  const auto total = total_loss(pb, ab, tau, m);
  CHECK(total.value == presence_objective(pb, tau).value + absence_objective(ab, tau, m).value);
  CHECK(total.grads.at("presence.images").rows() == 4);
  CHECK(total.grads.at("absence.negated").rows() == 6);
  CHECK(total.grads.at("log_tau")(0, 0) ==
        doctest::Approx(presence_objective(pb, tau).grads.at("log_tau")(0, 0) +
                        absence_objective(ab, tau, m).grads.at("log_tau")(0, 0)));
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> tau_dist(0.5, 20.0), margin_dist(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = 1 + trial % 4, d = 2 + trial % 5;
    const auto img = oracle::unit_rows(b, d, rng), cap = oracle::unit_rows(b, d, rng),
               neg = oracle::unit_rows(b, d, rng);
    const auto tau = Temperature<double>::learned(tau_dist(rng));
    const Margin m(margin_dist(rng));
    auto check = [&](const char* name, auto fn) {
      INFO(name << " trial " << trial);
      CHECK(oracle::loss_grad_error(fn, img, cap, neg, tau) <= 1e-5);
    };
    check("info_nce", [](const Batch& x, const Temperature<double>& t) {
      auto out = info_nce(x.images, x.captions, t);
      return out;
    });
    check("p1", [](const Batch& x, const Temperature<double>& t) { return loss_p1(x, t); });
    check("p2", [](const Batch& x, const Temperature<double>& t) { return loss_p2(x, t); });
    check("p3", [](const Batch& x, const Temperature<double>& t) { return loss_p3(x, t); });
    check("a1", [](const Batch& x, const Temperature<double>& t) { return loss_a1(x, t); });
    check("a2", [](const Batch& x, const Temperature<double>& t) { return loss_a2(x, t); });
    check("a3", [&](const Batch& x, const Temperature<double>&) { return loss_a3(x, m); });
    check("a3 scaled", [&](const Batch& x, const Temperature<double>& t) {
      return loss_a3(x, m, std::optional<Temperature<double>>(t));
    });
    check("presence", [](const Batch& x, const Temperature<double>& t) { return presence_objective(x, t); });
    check("absence", [&](const Batch& x, const Temperature<double>& t) { return absence_objective(x, t, m); });
    check("total", [&](const Batch& x, const Temperature<double>& t) {
      // same triplets fed to both sides; fold the prefixed keys back together
      auto out = total_loss(x, x, t, m);
      LossOutput<double> folded;
      folded.value = out.value;
      for (const char* s : {"images", "captions", "negated"}) {
        folded.grads.set(s, out.grads.at(std::string("presence.") + s) + out.grads.at(std::string("absence.") + s));
      }
      folded.grads.set("log_tau", out.grads.at("log_tau"));
      return folded;
    });
  }
}

TEST_CASE("fixed temperature has no log_tau gradient; raw a3 never does") {
  std::mt19937_64 rng(24);
  const auto pb = random_batch(3, 4, rng);
  CHECK_FALSE(loss_p1(pb, Temperature<double>::fixed(2.0)).grads.contains("log_tau"));
  CHECK(loss_p1(pb, Temperature<double>::learned(2.0)).grads.contains("log_tau"));
  CHECK_FALSE(loss_a3(pb, Margin(0.5)).grads.contains("log_tau"));
}

TEST_CASE("invariants on random batches") {
  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> tau_dist(0.1, 100.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 1 + trial % 8, d = 2 + trial % 10;
    const auto pb = random_batch(b, d, rng);
    const auto tau = Temperature<double>::fixed(tau_dist(rng));
    const Margin m(0.5);

    // non-negativity
    for (double v : {loss_p1(pb, tau).value, loss_p2(pb, tau).value, loss_p3(pb, tau).value,
                     loss_a1(pb, tau).value, loss_a2(pb, tau).value, loss_a3(pb, m).value}) {
      CHECK(v >= 0.0);
      CHECK(std::isfinite(v));
    }

    // denominator dominance over the image-side InfoNCE term
    const double limg = oracle::l_img(oracle::rows_of(pb.images.matrix()), oracle::rows_of(pb.captions.matrix()),
                                      tau.value());
    CHECK(loss_p1(pb, tau).value >= limg - 1e-12);

    // consistent permutation of every stream
    std::vector<int> perm(b);
    for (std::size_t i = 0; i < b; ++i) perm[i] = static_cast<int>(i);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::PermutationMatrix<Eigen::Dynamic> P(Eigen::Map<Eigen::VectorXi>(perm.data(), b));
    const auto qb = batch(P * pb.images.matrix(), P * pb.captions.matrix(), P * pb.negated.matrix());
    CHECK(std::abs(loss_p1(pb, tau).value - loss_p1(qb, tau).value) <= 1e-12);
    CHECK(std::abs(loss_p2(pb, tau).value - loss_p2(qb, tau).value) <= 1e-12);
    CHECK(std::abs(loss_p3(pb, tau).value - loss_p3(qb, tau).value) <= 1e-12);
    CHECK(std::abs(loss_a1(pb, tau).value - loss_a1(qb, tau).value) <= 1e-12);
    CHECK(std::abs(loss_a2(pb, tau).value - loss_a2(qb, tau).value) <= 1e-12);
    CHECK(std::abs(loss_a3(pb, m).value - loss_a3(qb, m).value) <= 1e-12);
  }
}

TEST_CASE("p3 is ln 2 at a tie and falls with the gap") {
  const auto tau = Temperature<double>::fixed(5.0);
  const auto i = rows({{1, 0}});
  double last = std::log(2.0);
  CHECK(loss_p3(batch(i, i, i), tau).value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  for (double angle = 0.1; angle < 3.1; angle += 0.3) {
    const double v = loss_p3(batch(i, i, rows({{std::cos(angle), std::sin(angle)}})), tau).value;
    CHECK(v < last);
    last = v;
  }
  // which side wins does not depend on tau
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pb = random_batch(1, 6, rng);
    const double gap = pb.images.matrix().row(0).dot(pb.captions.matrix().row(0)) -
                       pb.images.matrix().row(0).dot(pb.negated.matrix().row(0));
    for (double t : {0.1, 1.0, 50.0}) {
      CHECK((loss_p3(pb, Temperature<double>::fixed(t)).value < std::log(2.0)) == (gap > 0));
    }
  }
}

TEST_CASE("a3 is zero exactly when every cosine is at most -m") {
  const Margin m(0.4);
  const auto c = rows({{1, 0}, {0, 1}});
  auto at = [](double cosine) { return std::vector<double>{cosine, std::sqrt(1 - cosine * cosine)}; };
  auto negs = [&](double c0, double c1) {
    const auto a = at(c0), b = at(c1);
    // second caption is (0,1): rotate so the cosine lands on that axis
    return rows({{a[0], a[1]}, {b[1], b[0]}});
  };
  CHECK(loss_a3(batch(c, c, negs(-0.4, -0.9)), m).value == 0.0);
  CHECK(loss_a3(batch(c, c, negs(-0.5, -0.5)), m).value == 0.0);
  CHECK(loss_a3(batch(c, c, negs(-0.3, -0.9)), m).value > 0.0);
  CHECK(loss_a3(batch(c, c, negs(-0.9, -0.39)), m).value > 0.0);
  // the kink has zero subgradient
  const auto g = loss_a3(batch(c, c, negs(-0.4, -0.4)), m).grads.at("captions");
  CHECK(g.isZero(0.0));
}

TEST_CASE("error paths") {
  std::mt19937_64 rng(27);
  const EmbeddingBatch<double> a(oracle::unit_rows(2, 4, rng)), b(oracle::unit_rows(3, 4, rng)),
      c(oracle::unit_rows(2, 3, rng));
  auto code = [](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  const Temperature<double> tau;
  CHECK(code([&] { info_nce(a, b, tau); }) == ErrorCode::DimensionMismatch);
  CHECK(code([&] { info_nce(a, c, tau); }) == ErrorCode::DimensionMismatch);
  CHECK(code([&] { loss_p1(Batch{a, b, a}, tau); }) == ErrorCode::DimensionMismatch);
  CHECK(code([&] { loss_a3(Batch{a, a, c}, Margin(0.1)); }) == ErrorCode::DimensionMismatch);
  CHECK(code([] { Margin(1.5); }) == ErrorCode::InvalidArgument);
  CHECK(code([] { Margin(-0.1); }) == ErrorCode::InvalidArgument);
  CHECK(code([] { EmbeddingBatch<double>(MatrixXr(0, 4)); }) == ErrorCode::EmptyBatch);
}

TEST_CASE("stable at the temperature ceiling") {
  std::mt19937_64 rng(28);
  const auto pb = random_batch(8, 16, rng);
  Temperature<double> tau;
  tau.log_value = std::log(100.0);
  const auto I = oracle::rows_of(pb.images.matrix()), C = oracle::rows_of(pb.captions.matrix()),
             N = oracle::rows_of(pb.negated.matrix());
  CHECK(std::abs(loss_p1(pb, tau).value - oracle::p1(I, C, N, 100.0)) <= 1e-10);
  CHECK(std::isfinite(total_loss(pb, pb, tau, Margin(0.9)).value));
}
