#pragma once

// Exact verification lab for greedy parallel decoding: joint PMFs over n
// token positions held as explicit 64-bit tables, their marginals and
// product-of-marginals factorization, argmax oracles, the binary-vocabulary
// tightness construction, and L_p / total-variation / forward-KL
// measurements against the closed-form bounds.

#include <mdmlab/numerics.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mdmlab::theory {

// hard cap on n*ln|V| so tables stay around 1e8 entries
inline constexpr double kCapacityNats = 18.0;

// compensated (Kahan) sum, used for every table reduction
double kahan_sum(const Eigen::VectorXd& v);

struct JointPMF {
    int n = 0;      // number of positions
    int vocab = 0;  // |V|
    Eigen::VectorXd table;  // vocab^n entries, position 0 most significant
    std::string provenance;

    int64_t size() const { return table.size(); }
    double& at(const std::vector<int>& z);
    double at(const std::vector<int>& z) const;
    // throws NumericError / DimError if negative mass, sum off by >1e-12,
    // or the capacity bound is exceeded
    void validate() const;
};

int64_t table_size(int n, int vocab);
int64_t encode(const std::vector<int>& z, int vocab);
std::vector<int> decode(int64_t idx, int n, int vocab);

struct MarginalSet {
    int n = 0;
    int vocab = 0;
    Matd probs;  // [n x vocab], rows sum to 1
};

struct ConfidenceWitness {
    std::vector<int> xstar;
    double eps = 0.0;
    Eigen::VectorXd slack;  // eps'_j = 1 - p_j(xstar_j)

    double max_slack() const { return slack.size() ? slack.maxCoeff() : 0.0; }
    bool hypothesis_met() const { return slack.size() == 0 || max_slack() < eps; }
};

// exact column sums over the table
MarginalSet marginals(const JointPMF& p);

// outer product of a MarginalSet back into a table
JointPMF product_pmf(const MarginalSet& m);

// all assignments within tol of the table maximum
std::vector<std::vector<int>> argmax_assignments(const JointPMF& p, double tol = 1e-12);

// witness for a given eps against a target assignment; xstar defaults to the
// per-position marginal argmax (lowest value on ties)
ConfidenceWitness make_witness(const JointPMF& p, double eps);
ConfidenceWitness make_witness(const JointPMF& p, double eps, const std::vector<int>& xstar);

// tightest eps the joint witnesses for xstar: max_j eps'_j plus a machine
// margin so the strict inequality p_j(xstar_j) > 1-eps holds
double tightest_witness_epsilon(const JointPMF& p, const std::vector<int>& xstar);

enum class EquivalenceStatus {
    HypothesisNotMet,   // no confidence witness for this eps
    ConditionNotMet,    // witness exists but (n+1)eps > 1: theorem silent
    Pass,               // argmax p == argmax q == {xstar}
    Fail,
};

struct EquivalenceVerdict {
    EquivalenceStatus status = EquivalenceStatus::HypothesisNotMet;
    std::vector<int> xstar;
    std::vector<std::vector<int>> argmax_p;
    std::vector<std::vector<int>> argmax_q;
    std::string detail;
};

EquivalenceVerdict verify_equivalence(const JointPMF& p, double eps);

// Binary-vocabulary distribution on {xstar, e_1..e_n} showing eps <= 1/(n+1)
// is the exact threshold: marginals stay confident in xstar = all-zeros while
// the table argmax moves to the e_j. Requires eps in (1/(n+1), 1/2] for n>1;
// n=1 needs eps in (1/2, 1) (there p == q, so the 1/2 cap that anchors
// argmax q is meaningless).
JointPMF tightness_construction(int n, double eps);

struct DistanceReport {
    std::map<int, double> lp;  // order -> L_p distance
    double l1 = 0.0;
    double tv = 0.0;
    double kl = 0.0;
    bool kl_infinite = false;
};

DistanceReport distances(const JointPMF& p, const JointPMF& q, const std::vector<int>& p_orders);

double binary_entropy(double eps);

struct BoundCheck {
    std::string name;
    double measured = 0.0;
    double bound = 0.0;
    bool satisfied = false;   // measured < bound, strictly
    bool borderline = false;  // bound - measured < 1e-9
};

struct BoundReport {
    bool applicable = false;  // n > 1 and witness exists
    std::string reason;
    ConfidenceWitness witness;
    DistanceReport dist;
    std::vector<BoundCheck> checks;
    std::vector<std::vector<int>> argmax_p;
    std::vector<std::vector<int>> argmax_q;

    bool all_satisfied() const;
};

BoundReport verify_bounds(const JointPMF& p, double eps, const std::vector<int>& p_orders = {1, 2});

// p = (1-delta) * point(xstar) + delta * Dirichlet(1,..,1), delta ~ U(0,eps);
// every position then has slack <= delta < eps
std::pair<JointPMF, ConfidenceWitness> random_confident_joint(int n, int vocab, double eps, Rng& rng);

// total correlation via the chain rule over prefix entropies:
// sum_{k=2..n} [H(X_{<k}) + H(X_k) - H(X_{<=k})]
double total_correlation_chain(const JointPMF& p);

double entropy(const Eigen::VectorXd& probs);

// --- randomized verification campaign -------------------------------------

struct CampaignSpec {
    int trials = 10000;
    std::vector<int> n_values = {2, 3, 4};
    std::vector<int> vocab_values = {2, 3, 4};
    // eps for a trial with n positions; default 0.9/(n+1) keeps Part 1 applicable
    double eps_scale = 0.9;
    uint64_t seed = 0;
    std::vector<int> p_orders = {1, 2};
};

struct TrialRow {
    int64_t trial = 0;
    uint64_t seed = 0;
    int n = 0;
    int vocab = 0;
    double eps = 0.0;
    double delta = 0.0;  // realized mixture weight
    bool hypothesis_met = false;
    bool part1_pass = false;
    DistanceReport dist;
    std::vector<BoundCheck> checks;
    bool part2_pass = false;
};

struct CampaignSummary {
    int64_t trials = 0;
    int64_t part1_checked = 0;
    int64_t part1_passed = 0;
    int64_t part2_checked = 0;
    int64_t part2_passed = 0;
    double max_tv_over_eps = 0.0;
    bool all_pass() const {
        return part1_checked == part1_passed && part2_checked == part2_passed && trials > 0;
    }
};

struct TightnessCase {
    int n = 0;
    double eps = 0.0;
    bool hypothesis_met = false;
    bool xstar_excluded = false;  // xstar not in argmax p, as the construction predicts
    bool pass = false;            // both of the above
};

CampaignSummary run_campaign(const CampaignSpec& spec, std::vector<TrialRow>* rows = nullptr);

// criterion sweep: n = 1..max_n with eps = 1/(n+1) + 0.01
std::vector<TightnessCase> run_tightness_sweep(int max_n);

}  // namespace mdmlab::theory
