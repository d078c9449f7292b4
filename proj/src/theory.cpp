#include <mdmlab/theory.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mdmlab::theory {

double kahan_sum(const Eigen::VectorXd& v) {
    double sum = 0.0, comp = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double y = v[i] - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum;
}

int64_t table_size(int n, int vocab) {
    if (n < 1 || vocab < 2) throw DimError("table_size: need n >= 1, vocab >= 2");
    if (double(n) * std::log(double(vocab)) > kCapacityNats) {
        throw DimError("table_size: n*ln|V| exceeds capacity bound");
    }
    int64_t s = 1;
    for (int i = 0; i < n; ++i) s *= vocab;
    return s;
}

int64_t encode(const std::vector<int>& z, int vocab) {
    int64_t idx = 0;
    for (int d : z) {
        if (d < 0 || d >= vocab) throw DimError("encode: digit out of range");
        idx = idx * vocab + d;
    }
    return idx;
}

std::vector<int> decode(int64_t idx, int n, int vocab) {
    std::vector<int> z(static_cast<size_t>(n));
    for (int j = n - 1; j >= 0; --j) {
        z[size_t(j)] = int(idx % vocab);
        idx /= vocab;
    }
    return z;
}

double& JointPMF::at(const std::vector<int>& z) { return table[encode(z, vocab)]; }
double JointPMF::at(const std::vector<int>& z) const { return table[encode(z, vocab)]; }

void JointPMF::validate() const {
    if (table.size() != table_size(n, vocab)) {
        throw DimError("JointPMF: table size does not match vocab^n");
    }
    if ((table.array() < 0.0).any()) throw NumericError("JointPMF: negative mass");
    const double total = kahan_sum(table);
    if (std::abs(total - 1.0) > 1e-12) {
        throw NumericError("JointPMF: total mass " + std::to_string(total));
    }
}

MarginalSet marginals(const JointPMF& p) {
    MarginalSet m;
    m.n = p.n;
    m.vocab = p.vocab;
    m.probs = Matd::Zero(p.n, p.vocab);
    // per-position compensated accumulators
    Matd comp = Matd::Zero(p.n, p.vocab);
    const int64_t size = p.table.size();
    for (int64_t idx = 0; idx < size; ++idx) {
        const double mass = p.table[idx];
        int64_t rest = idx;
        for (int j = p.n - 1; j >= 0; --j) {
            const int d = int(rest % p.vocab);
            rest /= p.vocab;
            double& sum = m.probs(j, d);
            double& c = comp(j, d);
            const double y = mass - c;
            const double t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
    }
    return m;
}

JointPMF product_pmf(const MarginalSet& m) {
    JointPMF q;
    q.n = m.n;
    q.vocab = m.vocab;
    q.provenance = "product-of-marginals";
    q.table.resize(table_size(m.n, m.vocab));
    const int64_t size = q.table.size();
    for (int64_t idx = 0; idx < size; ++idx) {
        double prob = 1.0;
        int64_t rest = idx;
        for (int j = m.n - 1; j >= 0; --j) {
            prob *= m.probs(j, int(rest % m.vocab));
            rest /= m.vocab;
        }
        q.table[idx] = prob;
    }
    return q;
}

std::vector<std::vector<int>> argmax_assignments(const JointPMF& p, double tol) {
    const double best = p.table.maxCoeff();
    std::vector<std::vector<int>> out;
    for (int64_t idx = 0; idx < p.table.size(); ++idx) {
        if (best - p.table[idx] <= tol) out.push_back(decode(idx, p.n, p.vocab));
    }
    return out;
}

ConfidenceWitness make_witness(const JointPMF& p, double eps, const std::vector<int>& xstar) {
    if (int(xstar.size()) != p.n) throw DimError("make_witness: xstar length");
    const MarginalSet m = marginals(p);
    ConfidenceWitness w;
    w.xstar = xstar;
    w.eps = eps;
    w.slack.resize(p.n);
    for (int j = 0; j < p.n; ++j) w.slack[j] = 1.0 - m.probs(j, xstar[size_t(j)]);
    return w;
}

ConfidenceWitness make_witness(const JointPMF& p, double eps) {
    const MarginalSet m = marginals(p);
    std::vector<int> xstar(size_t(p.n));
    for (int j = 0; j < p.n; ++j) {
        int best = 0;
        for (int v = 1; v < p.vocab; ++v) {
            if (m.probs(j, v) > m.probs(j, best)) best = v;
        }
        xstar[size_t(j)] = best;
    }
    ConfidenceWitness w;
    w.xstar = xstar;
    w.eps = eps;
    w.slack.resize(p.n);
    for (int j = 0; j < p.n; ++j) w.slack[j] = 1.0 - m.probs(j, xstar[size_t(j)]);
    return w;
}

double tightest_witness_epsilon(const JointPMF& p, const std::vector<int>& xstar) {
    const ConfidenceWitness w = make_witness(p, 1.0, xstar);
    const double s = w.max_slack();
    return std::nextafter(std::nextafter(s, 1.0), 1.0);
}

namespace {

bool same_assignment_set(const std::vector<std::vector<int>>& a, const std::vector<std::vector<int>>& b) {
    if (a.size() != b.size()) return false;
    // argmax scans emit assignments in table order, so direct compare works
    return std::equal(a.begin(), a.end(), b.begin());
}

std::string describe_assignment(const std::vector<int>& z) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < z.size(); ++i) os << (i ? "," : "") << z[i];
    os << ")";
    return os.str();
}

}  // namespace

EquivalenceVerdict verify_equivalence(const JointPMF& p, double eps) {
    EquivalenceVerdict v;
    const ConfidenceWitness w = make_witness(p, eps);
    v.xstar = w.xstar;
    if (!w.hypothesis_met()) {
        v.status = EquivalenceStatus::HypothesisNotMet;
        v.detail = "no position set reaches confidence 1-eps";
        return v;
    }
    if (double(p.n + 1) * eps > 1.0) {
        v.status = EquivalenceStatus::ConditionNotMet;
        v.detail = "(n+1)*eps > 1; theorem makes no claim";
        return v;
    }
    v.argmax_p = argmax_assignments(p);
    v.argmax_q = argmax_assignments(product_pmf(marginals(p)));
    const std::vector<std::vector<int>> expect = {w.xstar};
    if (same_assignment_set(v.argmax_p, expect) && same_assignment_set(v.argmax_q, expect)) {
        v.status = EquivalenceStatus::Pass;
    } else {
        v.status = EquivalenceStatus::Fail;
        std::ostringstream os;
        os << "expected argmax {" << describe_assignment(w.xstar) << "}, got p:{";
        for (const auto& z : v.argmax_p) os << describe_assignment(z);
        os << "} q:{";
        for (const auto& z : v.argmax_q) os << describe_assignment(z);
        os << "}";
        v.detail = os.str();
    }
    return v;
}

JointPMF tightness_construction(int n, double eps) {
    if (n < 1) throw DimError("tightness_construction: n >= 1");
    const double lo = 1.0 / double(n + 1);
    const double hi = (n == 1) ? 1.0 : 0.5;
    if (!(eps > lo) || !(eps <= hi) || (n == 1 && eps >= 1.0)) {
        throw DimError("tightness_construction: eps out of range for n=" + std::to_string(n));
    }
    const double eta = (eps - lo) / double(n + 1);
    JointPMF p;
    p.n = n;
    p.vocab = 2;
    p.provenance = "tightness-construction";
    p.table = Eigen::VectorXd::Zero(table_size(n, 2));
    std::vector<int> z(size_t(n), 0);
    p.at(z) = lo - eta;  // xstar = all zeros
    for (int j = 0; j < n; ++j) {
        z.assign(size_t(n), 0);
        z[size_t(j)] = 1;
        p.at(z) = lo + eta / double(n);
    }
    p.validate();
    return p;
}

double binary_entropy(double eps) {
    if (eps <= 0.0 || eps >= 1.0) return 0.0;
    return -eps * std::log(eps) - (1.0 - eps) * std::log(1.0 - eps);
}

double entropy(const Eigen::VectorXd& probs) {
    Eigen::VectorXd terms(probs.size());
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        const double x = probs[i];
        terms[i] = (x > 0.0) ? -x * std::log(x) : 0.0;
    }
    return kahan_sum(terms);
}

DistanceReport distances(const JointPMF& p, const JointPMF& q, const std::vector<int>& p_orders) {
    if (p.n != q.n || p.vocab != q.vocab) throw DimError("distances: mismatched shapes");
    DistanceReport r;
    const Eigen::VectorXd absdiff = (p.table - q.table).cwiseAbs();
    r.l1 = kahan_sum(absdiff);
    r.tv = 0.5 * r.l1;
    for (int order : p_orders) {
        if (order < 1) throw DimError("distances: p order >= 1");
        if (order == 1) {
            r.lp[1] = r.l1;
        } else {
            Eigen::VectorXd powed(absdiff.size());
            for (Eigen::Index i = 0; i < absdiff.size(); ++i) powed[i] = std::pow(absdiff[i], double(order));
            r.lp[order] = std::pow(kahan_sum(powed), 1.0 / double(order));
        }
    }
    Eigen::VectorXd klterms = Eigen::VectorXd::Zero(p.table.size());
    for (Eigen::Index i = 0; i < p.table.size(); ++i) {
        const double pi = p.table[i], qi = q.table[i];
        if (pi <= 0.0) continue;  // 0 * log(0/q) = 0
        if (qi <= 0.0) {
            r.kl_infinite = true;
            break;
        }
        klterms[i] = pi * std::log(pi / qi);
    }
    r.kl = r.kl_infinite ? std::numeric_limits<double>::infinity() : kahan_sum(klterms);
    return r;
}

bool BoundReport::all_satisfied() const {
    if (!applicable) return false;
    return std::all_of(checks.begin(), checks.end(), [](const BoundCheck& c) { return c.satisfied; });
}

BoundReport verify_bounds(const JointPMF& p, double eps, const std::vector<int>& p_orders) {
    BoundReport rep;
    rep.witness = make_witness(p, eps);
    if (!rep.witness.hypothesis_met()) {
        rep.reason = "hypothesis not met";
        return rep;
    }
    if (p.n <= 1) {
        rep.reason = "bounds stated for n > 1";
        return rep;
    }
    rep.applicable = true;
    const JointPMF q = product_pmf(marginals(p));
    rep.dist = distances(p, q, p_orders);
    rep.argmax_p = argmax_assignments(p);
    rep.argmax_q = argmax_assignments(q);

    const double n = double(p.n);
    auto add = [&rep](const std::string& name, double measured, double bound) {
        BoundCheck c;
        c.name = name;
        c.measured = measured;
        c.bound = bound;
        c.satisfied = measured < bound;
        c.borderline = (bound - measured) < 1e-9;
        rep.checks.push_back(c);
    };
    for (const auto& [order, value] : rep.dist.lp) {
        const double bound = std::pow(std::pow(n - 1.0, double(order)) + 2.0 * n, 1.0 / double(order)) * eps;
        add("L" + std::to_string(order), value, bound);
    }
    add("TV", rep.dist.tv, (3.0 * n - 1.0) / 2.0 * eps);
    const double klb = (n - 1.0) * (binary_entropy(eps) + eps * std::log(double(p.vocab - 1)));
    add("KL", rep.dist.kl_infinite ? std::numeric_limits<double>::infinity() : rep.dist.kl, klb);
    return rep;
}

std::pair<JointPMF, ConfidenceWitness> random_confident_joint(int n, int vocab, double eps, Rng& rng) {
    if (!(eps > 0.0) || !(eps < 1.0)) throw DimError("random_confident_joint: eps in (0,1)");
    JointPMF p;
    p.n = n;
    p.vocab = vocab;
    p.provenance = "mixture-construction";
    const int64_t size = table_size(n, vocab);
    p.table.resize(size);
    const double delta = rng.uniform() * eps;
    // Dirichlet(1,..,1) via normalized exponentials
    double total = 0.0;
    for (int64_t i = 0; i < size; ++i) {
        p.table[i] = rng.exponential();
        total += p.table[i];
    }
    p.table *= delta / total;
    std::vector<int> xstar(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) xstar[size_t(j)] = int(rng.uniform_int(0, vocab - 1));
    p.table[encode(xstar, vocab)] += 1.0 - delta;
    ConfidenceWitness w = make_witness(p, eps, xstar);
    return {std::move(p), std::move(w)};
}

double total_correlation_chain(const JointPMF& p) {
    // prefix tables: position 0 most significant makes each prefix marginal a
    // sum over contiguous chunks
    const MarginalSet m = marginals(p);
    std::vector<double> prefix_entropy(size_t(p.n) + 1, 0.0);
    Eigen::VectorXd prefix = p.table;
    for (int len = p.n; len >= 1; --len) {
        prefix_entropy[size_t(len)] = entropy(prefix);
        if (len > 1) {
            const int64_t out_size = prefix.size() / p.vocab;
            Eigen::VectorXd next(out_size);
            for (int64_t i = 0; i < out_size; ++i) {
                next[i] = kahan_sum(prefix.segment(i * p.vocab, p.vocab));
            }
            prefix = std::move(next);
        }
    }
    double total = 0.0;
    for (int k = 2; k <= p.n; ++k) {
        const double hk = entropy(m.probs.row(k - 1).transpose());
        total += prefix_entropy[size_t(k - 1)] + hk - prefix_entropy[size_t(k)];
    }
    return total;
}

CampaignSummary run_campaign(const CampaignSpec& spec, std::vector<TrialRow>* rows) {
    CampaignSummary summary;
    Rng seeder(spec.seed);
    for (int64_t trial = 0; trial < spec.trials; ++trial) {
        const uint64_t trial_seed = seeder.next_u64();
        Rng rng(trial_seed);
        const int n = spec.n_values[size_t(rng.uniform_int(0, int64_t(spec.n_values.size()) - 1))];
        const int vocab = spec.vocab_values[size_t(rng.uniform_int(0, int64_t(spec.vocab_values.size()) - 1))];
        const double eps = spec.eps_scale / double(n + 1);
        auto [p, witness] = random_confident_joint(n, vocab, eps, rng);

        TrialRow row;
        row.trial = trial;
        row.seed = trial_seed;
        row.n = n;
        row.vocab = vocab;
        row.eps = eps;
        row.delta = witness.max_slack();
        row.hypothesis_met = witness.hypothesis_met();

        const EquivalenceVerdict v = verify_equivalence(p, eps);
        if (v.status == EquivalenceStatus::Pass || v.status == EquivalenceStatus::Fail) {
            ++summary.part1_checked;
            row.part1_pass = v.status == EquivalenceStatus::Pass;
            if (row.part1_pass) ++summary.part1_passed;
        }

        const BoundReport b = verify_bounds(p, eps, spec.p_orders);
        if (b.applicable) {
            ++summary.part2_checked;
            row.dist = b.dist;
            row.checks = b.checks;
            row.part2_pass = b.all_satisfied();
            if (row.part2_pass) ++summary.part2_passed;
            summary.max_tv_over_eps = std::max(summary.max_tv_over_eps, b.dist.tv / eps);
        }
        ++summary.trials;
        if (rows) rows->push_back(std::move(row));
    }
    return summary;
}

std::vector<TightnessCase> run_tightness_sweep(int max_n) {
    std::vector<TightnessCase> cases;
    for (int n = 1; n <= max_n; ++n) {
        TightnessCase c;
        c.n = n;
        c.eps = 1.0 / double(n + 1) + 0.01;
        const JointPMF p = tightness_construction(n, c.eps);
        const ConfidenceWitness w = make_witness(p, c.eps, std::vector<int>(size_t(n), 0));
        c.hypothesis_met = w.hypothesis_met();
        const auto am = argmax_assignments(p);
        c.xstar_excluded = std::none_of(am.begin(), am.end(), [&](const std::vector<int>& z) {
            return std::all_of(z.begin(), z.end(), [](int d) { return d == 0; });
        });
        c.pass = c.hypothesis_met && c.xstar_excluded;
        cases.push_back(c);
    }
    return cases;
}

}  // namespace mdmlab::theory
