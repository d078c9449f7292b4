#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <mdmlab/theory.hpp>

#include <cmath>

using namespace mdmlab;
using namespace mdmlab::theory;

namespace {

JointPMF dirichlet_joint(int n, int vocab, Rng& rng) {
    JointPMF p;
    p.n = n;
    p.vocab = vocab;
    p.table.resize(table_size(n, vocab));
    double total = 0.0;
    for (Eigen::Index i = 0; i < p.table.size(); ++i) {
        p.table[i] = rng.exponential();
        total += p.table[i];
    }
    p.table /= total;
    return p;
}

}  // namespace

TEST_CASE("encode/decode round trip") {
    for (int64_t idx = 0; idx < table_size(3, 4); ++idx) {
        CHECK(encode(decode(idx, 3, 4), 4) == idx);
    }
    CHECK(encode({1, 0, 2}, 3) == 1 * 9 + 0 * 3 + 2);
}

TEST_CASE("capacity bound enforced") {
    CHECK_THROWS_AS(table_size(30, 4), DimError);
    CHECK_NOTHROW(table_size(4, 4));
}

TEST_CASE("marginals match an independent double-loop oracle (n=2, |V|=3)") {
    Rng rng(17);
    for (int rep = 0; rep < 50; ++rep) {
        const JointPMF p = dirichlet_joint(2, 3, rng);
        // independent oracle: direct row/column sums
        double m0[3] = {0, 0, 0}, m1[3] = {0, 0, 0};
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                m0[a] += p.table[a * 3 + b];
                m1[b] += p.table[a * 3 + b];
            }
        const MarginalSet m = marginals(p);
        for (int v = 0; v < 3; ++v) {
            CHECK(std::abs(m.probs(0, v) - m0[v]) < 1e-14);
            CHECK(std::abs(m.probs(1, v) - m1[v]) < 1e-14);
        }
    }
}

TEST_CASE("product measures are fixed points of marginalize-then-product") {
    // dyadic factors keep every product and sum exact in binary
    MarginalSet m;
    m.n = 2;
    m.vocab = 4;
    m.probs = Matd(2, 4);
    m.probs << 0.5, 0.25, 0.125, 0.125, 0.25, 0.25, 0.25, 0.25;
    const JointPMF q = product_pmf(m);
    const JointPMF q2 = product_pmf(marginals(q));
    CHECK(q.table == q2.table);
}

TEST_CASE("point mass marginals are point masses") {
    JointPMF p;
    p.n = 3;
    p.vocab = 2;
    p.table = Eigen::VectorXd::Zero(8);
    p.at({1, 0, 1}) = 1.0;
    const MarginalSet m = marginals(p);
    CHECK(m.probs(0, 1) == 1.0);
    CHECK(m.probs(1, 0) == 1.0);
    CHECK(m.probs(2, 1) == 1.0);
    const auto am = argmax_assignments(p);
    REQUIRE(am.size() == 1);
    CHECK(am[0] == std::vector<int>{1, 0, 1});
}

TEST_CASE("uniform table argmax is the whole assignment space") {
    JointPMF p;
    p.n = 2;
    p.vocab = 3;
    p.table = Eigen::VectorXd::Constant(9, 1.0 / 9.0);
    CHECK(argmax_assignments(p).size() == 9);
}

TEST_CASE("tightness construction reproduces the worked n=2, eps=0.4 cell") {
    const JointPMF p = tightness_construction(2, 0.4);
    const double eta = (0.4 - 1.0 / 3.0) / 3.0;
    CHECK(eta == doctest::Approx(0.0222222).epsilon(1e-5));
    CHECK(p.at({0, 1}) == doctest::Approx(0.3444444).epsilon(1e-6));
    CHECK(p.at({1, 0}) == doctest::Approx(0.3444444).epsilon(1e-6));
    CHECK(p.at({0, 0}) == doctest::Approx(0.3111111).epsilon(1e-6));
    CHECK(p.at({1, 1}) == 0.0);
    const MarginalSet m = marginals(p);
    CHECK(m.probs(0, 0) == doctest::Approx(0.6555556).epsilon(1e-6));
    CHECK(m.probs(0, 0) > 1.0 - 0.4);

    // closed-form mass identity: p(x*) + n*p(e_j) == 1
    CHECK(p.at({0, 0}) + 2 * p.at({0, 1}) == doctest::Approx(1.0).epsilon(1e-15));

    // argmax excludes x* and is exactly the e_j set
    const auto am = argmax_assignments(p);
    REQUIRE(am.size() == 2);
    CHECK(am[0] == std::vector<int>{0, 1});
    CHECK(am[1] == std::vector<int>{1, 0});
}

TEST_CASE("tightness construction rejects out-of-range eps") {
    CHECK_THROWS_AS(tightness_construction(2, 1.0 / 3.0), DimError);
    CHECK_THROWS_AS(tightness_construction(2, 0.51), DimError);
    CHECK_THROWS_AS(tightness_construction(1, 0.49), DimError);
    CHECK_NOTHROW(tightness_construction(1, 0.51));
}

TEST_CASE("tightness sweep n=1..6 meets hypothesis and dethrones xstar") {
    const auto cases = run_tightness_sweep(6);
    REQUIRE(cases.size() == 6);
    for (const auto& c : cases) {
        CAPTURE(c.n);
        CHECK(c.hypothesis_met);
        CHECK(c.xstar_excluded);
        CHECK(c.pass);
    }
}

TEST_CASE("verify_equivalence on the 0.8 point-mass + 0.2 dirichlet mixture") {
    Rng rng(2024);
    int passes = 0;
    const int trials = 2000;
    for (int rep = 0; rep < trials; ++rep) {
        JointPMF p = dirichlet_joint(3, 3, rng);
        p.table *= 0.2;
        std::vector<int> xstar = {int(rng.uniform_int(0, 2)), int(rng.uniform_int(0, 2)),
                                  int(rng.uniform_int(0, 2))};
        p.at(xstar) += 0.8;
        const EquivalenceVerdict v = verify_equivalence(p, 0.24);
        CHECK(v.status == EquivalenceStatus::Pass);
        CHECK(v.xstar == xstar);
        passes += v.status == EquivalenceStatus::Pass;
    }
    CHECK(passes == trials);
}

TEST_CASE("verify_equivalence reports hypothesis-not-met without a witness") {
    JointPMF p;
    p.n = 2;
    p.vocab = 2;
    p.table = Eigen::VectorXd::Constant(4, 0.25);
    CHECK(verify_equivalence(p, 0.1).status == EquivalenceStatus::HypothesisNotMet);
}

TEST_CASE("tightness construction beyond the threshold fails equivalence as predicted") {
    for (int n = 2; n <= 5; ++n) {
        const double eps = 1.0 / double(n + 1) + 0.01;
        const JointPMF p = tightness_construction(n, eps);
        const EquivalenceVerdict v = verify_equivalence(p, eps);
        // hypothesis holds, condition (n+1)eps <= 1 does not
        CHECK(v.status == EquivalenceStatus::ConditionNotMet);
        const auto am = argmax_assignments(p);
        CHECK(am.size() == size_t(n));
    }
}

TEST_CASE("n=1 equivalence is immediate for any confident joint with eps <= 1/2") {
    Rng rng(5);
    for (int rep = 0; rep < 100; ++rep) {
        auto [p, w] = random_confident_joint(1, 4, 0.4, rng);
        const EquivalenceVerdict v = verify_equivalence(p, 0.5);
        CHECK(v.status == EquivalenceStatus::Pass);
    }
}

TEST_CASE("distances: identical distributions and the deterministic diagonal") {
    Rng rng(8);
    const JointPMF p = dirichlet_joint(2, 3, rng);
    const DistanceReport r = distances(p, p, {1, 2, 3});
    CHECK(r.l1 == 0.0);
    CHECK(r.tv == 0.0);
    CHECK(r.kl == 0.0);
    CHECK(r.lp.at(3) == 0.0);

    JointPMF point;
    point.n = 2;
    point.vocab = 2;
    point.table = Eigen::VectorXd::Zero(4);
    point.at({0, 0}) = 1.0;
    const JointPMF q = product_pmf(marginals(point));
    const DistanceReport r2 = distances(point, q, {1});
    CHECK(r2.kl == 0.0);
    CHECK(r2.tv == 0.0);
}

TEST_CASE("hand-checkable cell: uniform on {(0,0),(1,1)}") {
    JointPMF p;
    p.n = 2;
    p.vocab = 2;
    p.table = Eigen::VectorXd::Zero(4);
    p.at({0, 0}) = 0.5;
    p.at({1, 1}) = 0.5;
    const MarginalSet m = marginals(p);
    for (int j = 0; j < 2; ++j)
        for (int v = 0; v < 2; ++v) CHECK(m.probs(j, v) == 0.5);
    const JointPMF q = product_pmf(m);
    const DistanceReport r = distances(p, q, {1, 2});
    CHECK(r.l1 == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.tv == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(std::abs(r.kl - std::log(2.0)) < 1e-12);
    // no small-eps witness exists: marginals sit at 1/2
    CHECK_FALSE(make_witness(p, 0.3).hypothesis_met());
}

TEST_CASE("verify_bounds formula arithmetic") {
    Rng rng(31);
    {
        auto [p, w] = random_confident_joint(2, 3, 0.1, rng);
        const BoundReport rep = verify_bounds(p, 0.1, {1, 2});
        REQUIRE(rep.applicable);
        double tvb = 0, l1b = 0, l2b = 0;
        for (const auto& c : rep.checks) {
            if (c.name == "TV") tvb = c.bound;
            if (c.name == "L1") l1b = c.bound;
            if (c.name == "L2") l2b = c.bound;
        }
        CHECK(tvb == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(l1b == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(l2b == doctest::Approx(0.2236).epsilon(1e-4));
    }
    {
        auto [p, w] = random_confident_joint(3, 4, 0.1, rng);
        const BoundReport rep = verify_bounds(p, 0.1, {1});
        double klb = 0;
        for (const auto& c : rep.checks)
            if (c.name == "KL") klb = c.bound;
        CHECK(klb == doctest::Approx(0.869888).epsilon(1e-5));
    }
}

TEST_CASE("bounds are not applicable at n=1") {
    Rng rng(4);
    auto [p, w] = random_confident_joint(1, 3, 0.2, rng);
    const BoundReport rep = verify_bounds(p, 0.2);
    CHECK_FALSE(rep.applicable);
    CHECK(rep.reason == "bounds stated for n > 1");
}

TEST_CASE("random confident joints satisfy witness, bonferroni, off-max and sandwich properties") {
    Rng rng(77);
    for (int rep = 0; rep < 500; ++rep) {
        const int n = 2 + int(rng.uniform_int(0, 2));
        const int vocab = 2 + int(rng.uniform_int(0, 2));
        const double eps = 0.9 / double(n + 1);
        auto [p, w] = random_confident_joint(n, vocab, eps, rng);
        p.validate();
        CHECK(w.hypothesis_met());

        const double slack_sum = w.slack.sum();
        const double slack_max = w.max_slack();
        const double p_xstar = p.at(w.xstar);
        // Bonferroni lower bound
        CHECK(p_xstar >= 1.0 - slack_sum - 1e-12);
        // off-maximizer mass
        const int64_t star_idx = encode(w.xstar, vocab);
        for (int64_t i = 0; i < p.table.size(); ++i) {
            if (i != star_idx) CHECK(p.table[i] <= slack_max + 1e-12);
        }
        // sandwich on q(x*) and the resulting gap
        const JointPMF q = product_pmf(marginals(p));
        const double q_xstar = q.at(w.xstar);
        CHECK(q_xstar >= 1.0 - slack_sum - 1e-12);
        CHECK(q_xstar <= 1.0 - slack_max + 1e-12);
        CHECK(std::abs(p_xstar - q_xstar) < double(n - 1) * eps + 1e-12);
    }
}

TEST_CASE("kl chain-rule identity against the table computation") {
    Rng rng(123);
    for (int rep = 0; rep < 300; ++rep) {
        const int n = 2 + int(rng.uniform_int(0, 2));
        const int vocab = 2 + int(rng.uniform_int(0, 2));
        const JointPMF p = dirichlet_joint(n, vocab, rng);
        const JointPMF q = product_pmf(marginals(p));
        const DistanceReport r = distances(p, q, {1});
        const double chain = total_correlation_chain(p);
        CHECK(std::abs(r.kl - chain) < 1e-9);
    }
}

TEST_CASE("campaign smoke run passes part 1 and part 2") {
    CampaignSpec spec;
    spec.trials = 500;
    spec.seed = 9;
    std::vector<TrialRow> rows;
    const CampaignSummary s = run_campaign(spec, &rows);
    CHECK(s.trials == 500);
    CHECK(s.part1_checked == 500);
    CHECK(s.part1_passed == 500);
    CHECK(s.part2_checked == 500);
    CHECK(s.part2_passed == 500);
    CHECK(rows.size() == 500);
    CHECK(s.max_tv_over_eps < 2.5);  // < (3n-1)/2 at the smallest n
}

TEST_CASE("tightest witness epsilon brackets the max slack") {
    Rng rng(55);
    auto [p, w] = random_confident_joint(3, 3, 0.2, rng);
    const double tight = tightest_witness_epsilon(p, w.xstar);
    CHECK(tight > w.max_slack());
    CHECK(tight - w.max_slack() < 1e-12);
    CHECK(make_witness(p, tight, w.xstar).hypothesis_met());
}
