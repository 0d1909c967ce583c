#include "rmt/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "rmt/rng.hpp"

namespace rmt {

std::string to_string(Generator g) {
    switch (g) {
        case Generator::gaussian: return "gaussian";
        case Generator::lipschitz_of_gaussian: return "lipschitz_of_gaussian";
        case Generator::bounded_independent: return "bounded_independent";
    }
    return "?";
}

Generator generator_from_string(const std::string& s) {
    if (s == "gaussian") return Generator::gaussian;
    if (s == "lipschitz_of_gaussian") return Generator::lipschitz_of_gaussian;
    if (s == "bounded_independent") return Generator::bounded_independent;
    throw ModelError("unknown generator '" + s + "'");
}

ColumnLaw::ColumnLaw(Vec mean, Mat cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
    const auto p = mean_.size();
    if (p < 1) throw ModelError("empty mean vector");
    if (cov_.rows() != p || cov_.cols() != p)
        throw ModelError("covariance shape does not match mean dimension");
    const double asym = (cov_ - cov_.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12)
        throw ModelError("covariance not symmetric (max asymmetry " + std::to_string(asym) + ")");
    cov_ = 0.5 * (cov_ + cov_.transpose().eval());

    Eigen::SelfAdjointEigenSolver<Mat> es(cov_);
    if (es.info() != Eigen::Success) throw ModelError("covariance eigendecomposition failed");
    const double floor = -1e-10 * std::max(cov_.trace(), 0.0) / static_cast<double>(p);
    Vec evals = es.eigenvalues();
    if (evals.minCoeff() < floor)
        throw ModelError("covariance not positive semi-definite (min eigenvalue " +
                         std::to_string(evals.minCoeff()) + ")");
    // numerically semi-definite inputs: clamp tiny negatives to zero
    Vec sqrt_evals = evals.cwiseMax(0.0).cwiseSqrt();
    sqrt_cov_ = es.eigenvectors() * sqrt_evals.asDiagonal() * es.eigenvectors().transpose();

    second_moment_ = cov_ + mean_ * mean_.transpose();
    trace_second_moment_ = second_moment_.trace();

    const double s = second_moment_(0, 0);
    const double dev =
        (second_moment_ - s * Mat::Identity(p, p)).cwiseAbs().maxCoeff();
    if (s > 0.0 && dev <= 1e-14 * s) isotropic_scale_ = s;
}

struct DataModel::Impl {
    long p = 0;
    long n = 0;
    double epsilon = 0.0;
    Generator gen = Generator::gaussian;
    std::vector<LawGroup> groups;
    std::vector<long> group_start;  // first column of each group
};

namespace {

std::shared_ptr<const DataModel::Impl> build_impl(long p, long n, double epsilon, Generator gen,
                                                  std::vector<LawGroup> groups) {
    if (p < 1 || n < 1) throw ModelError("p and n must be positive");
    if (!(epsilon > 0.0 && epsilon <= 0.5)) throw ModelError("epsilon must lie in (0, 1/2]");
    if (groups.empty()) throw ModelError("model declares no column laws");
    long total = 0;
    for (size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].count < 1)
            throw ModelError("group " + std::to_string(g) + " has nonpositive count",
                             static_cast<long>(g));
        if (groups[g].law.dim() != p)
            throw ModelError("group " + std::to_string(g) + " law dimension != p",
                             static_cast<long>(g));
        total += groups[g].count;
    }
    if (total != n) throw ModelError("group counts sum to " + std::to_string(total) +
                                     ", expected n = " + std::to_string(n));
    auto impl = std::make_shared<DataModel::Impl>();
    impl->p = p;
    impl->n = n;
    impl->epsilon = epsilon;
    impl->gen = gen;
    impl->group_start.reserve(groups.size());
    long start = 0;
    for (const auto& g : groups) {
        impl->group_start.push_back(start);
        start += g.count;
    }
    impl->groups = std::move(groups);
    return impl;
}

ValidationReport report_for(const DataModel::Impl& m) {
    ValidationReport rep;
    rep.margin_bound = 1.0 - 2.0 * m.epsilon;
    Mat avg = Mat::Zero(m.p, m.p);
    double min_tr = std::numeric_limits<double>::infinity();
    for (const auto& g : m.groups) {
        avg += (static_cast<double>(g.count) / static_cast<double>(m.n)) * g.law.second_moment();
        min_tr = std::min(min_tr, g.law.trace_second_moment() / static_cast<double>(m.n));
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(avg, Eigen::EigenvaluesOnly);
    rep.top_eigenvalue = es.eigenvalues().maxCoeff();
    rep.min_trace_over_n = min_tr;
    if (rep.top_eigenvalue > rep.margin_bound)
        rep.failures.push_back("largest eigenvalue of (1/n) sum Sigma_i = " +
                               std::to_string(rep.top_eigenvalue) + " exceeds 1 - 2 epsilon = " +
                               std::to_string(rep.margin_bound));
    if (rep.min_trace_over_n < 1e-6)
        rep.failures.push_back("min_i tr(Sigma_i)/n = " + std::to_string(rep.min_trace_over_n) +
                               " below the 1e-6 floor");
    rep.pass = rep.failures.empty();
    return rep;
}

}  // namespace

DataModel DataModel::create(long p, long n, double epsilon, Generator gen,
                            std::vector<LawGroup> groups) {
    auto impl = build_impl(p, n, epsilon, gen, std::move(groups));
    ValidationReport rep = report_for(*impl);
    if (!rep.pass) {
        std::string msg = "model validation failed:";
        for (const auto& f : rep.failures) msg += " " + f + ";";
        throw ModelError(msg);
    }
    return DataModel(std::move(impl));
}

DataModel DataModel::create_unchecked(long p, long n, double epsilon, Generator gen,
                                      std::vector<LawGroup> groups) {
    auto impl = build_impl(p, n, epsilon, gen, std::move(groups));
    // trace floor still enforced
    ValidationReport rep = report_for(*impl);
    if (rep.min_trace_over_n < 1e-6)
        throw ModelError("min_i tr(Sigma_i)/n below the 1e-6 floor");
    return DataModel(std::move(impl));
}

DataModel DataModel::shared(long p, long n, double epsilon, Generator gen, ColumnLaw law) {
    std::vector<LawGroup> groups;
    groups.push_back(LawGroup{n, std::move(law)});
    return create(p, n, epsilon, gen, std::move(groups));
}

long DataModel::p() const { return impl_->p; }
long DataModel::n() const { return impl_->n; }
double DataModel::epsilon() const { return impl_->epsilon; }
Generator DataModel::generator() const { return impl_->gen; }
const std::vector<LawGroup>& DataModel::groups() const { return impl_->groups; }
bool DataModel::shared_law() const { return impl_->groups.size() == 1; }

const ColumnLaw& DataModel::law_for_column(long i) const {
    if (i < 0 || i >= impl_->n) throw ModelError("column index out of range");
    size_t g = impl_->group_start.size() - 1;
    while (impl_->group_start[g] > i) --g;
    return impl_->groups[g].law;
}

Mat DataModel::mean_second_moment() const {
    Mat avg = Mat::Zero(impl_->p, impl_->p);
    for (const auto& g : impl_->groups)
        avg += (static_cast<double>(g.count) / static_cast<double>(impl_->n)) *
               g.law.second_moment();
    return avg;
}

ValidationReport validate_model(const DataModel& model) {
    ValidationReport rep;
    rep.margin_bound = 1.0 - 2.0 * model.epsilon();
    Mat avg = model.mean_second_moment();
    Eigen::SelfAdjointEigenSolver<Mat> es(avg, Eigen::EigenvaluesOnly);
    rep.top_eigenvalue = es.eigenvalues().maxCoeff();
    double min_tr = std::numeric_limits<double>::infinity();
    for (const auto& g : model.groups())
        min_tr = std::min(min_tr, g.law.trace_second_moment() / static_cast<double>(model.n()));
    rep.min_trace_over_n = min_tr;
    if (rep.top_eigenvalue > rep.margin_bound)
        rep.failures.push_back("largest eigenvalue exceeds 1 - 2 epsilon");
    if (rep.min_trace_over_n < 1e-6) rep.failures.push_back("per-column trace floor violated");
    rep.pass = rep.failures.empty();
    return rep;
}

SampleMatrix sample(const DataModel& model, std::uint64_t seed) {
    const long p = model.p(), n = model.n();
    Mat X(p, n);
    const CounterRng root = CounterRng::from_seed(seed);
    Vec g(p);
    for (long i = 0; i < n; ++i) {
        CounterRng rng = root.derive(static_cast<std::uint64_t>(i));
        const ColumnLaw& law = model.law_for_column(i);
        switch (model.generator()) {
            case Generator::gaussian: {
                for (long k = 0; k < p; ++k) g[k] = rng.next_normal();
                X.col(i) = law.mean() + law.sqrt_cov() * g;
                break;
            }
            case Generator::lipschitz_of_gaussian: {
                for (long k = 0; k < p; ++k) g[k] = rng.next_normal();
                X.col(i) = law.mean() + (law.sqrt_cov() * g).array().tanh().matrix();
                break;
            }
            case Generator::bounded_independent: {
                const double r = std::sqrt(3.0);
                for (long k = 0; k < p; ++k) g[k] = rng.next_uniform(-r, r);
                X.col(i) = law.mean() + law.sqrt_cov() * g;
                break;
            }
        }
    }
    return SampleMatrix{std::move(X), seed, model};
}

SampleMatrix sample_bounded(long p, long n, std::uint64_t seed) {
    if (p < 1 || n < 1) throw ModelError("p and n must be positive");
    Mat X(p, n);
    const CounterRng root = CounterRng::from_seed(seed);
    const double r = std::sqrt(3.0);
    for (long i = 0; i < n; ++i) {
        CounterRng rng = root.derive(static_cast<std::uint64_t>(i));
        for (long k = 0; k < p; ++k) X(k, i) = rng.next_uniform(-r, r);
    }
    return SampleMatrix{std::move(X), seed, std::nullopt};
}

namespace {

using nlohmann::json;

Vec vec_from_json(const json& j) {
    if (!j.is_array()) throw ModelError("expected an array for a vector field");
    Vec v(j.size());
    for (size_t k = 0; k < j.size(); ++k) v[static_cast<long>(k)] = j[k].get<double>();
    return v;
}

Mat mat_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw ModelError("expected a non-empty array of rows");
    const size_t rows = j.size();
    const size_t cols = j[0].size();
    Mat m(rows, cols);
    for (size_t r = 0; r < rows; ++r) {
        if (j[r].size() != cols) throw ModelError("ragged matrix rows in model file");
        for (size_t c = 0; c < cols; ++c)
            m(static_cast<long>(r), static_cast<long>(c)) = j[r][c].get<double>();
    }
    return m;
}

ColumnLaw law_from_json(const json& j, long index) {
    if (!j.contains("mean") || !j.contains("cov"))
        throw ModelError("law entry missing 'mean' or 'cov'", index);
    try {
        return ColumnLaw(vec_from_json(j["mean"]), mat_from_json(j["cov"]));
    } catch (const ModelError& e) {
        throw ModelError(std::string(e.what()) + " (law index " + std::to_string(index) + ")",
                         index);
    }
}

json vec_to_json(const Vec& v) {
    json a = json::array();
    for (long k = 0; k < v.size(); ++k) a.push_back(v[k]);
    return a;
}

json mat_to_json(const Mat& m) {
    json a = json::array();
    for (long r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (long c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        a.push_back(row);
    }
    return a;
}

json law_to_json(const ColumnLaw& law) {
    return json{{"mean", vec_to_json(law.mean())}, {"cov", mat_to_json(law.cov())}};
}

}  // namespace

DataModel model_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw ModelError(std::string("model file is not valid JSON: ") + e.what());
    }
    for (const char* field : {"p", "n", "epsilon", "generator"})
        if (!j.contains(field)) throw ModelError(std::string("model file missing field '") + field + "'");
    const long p = j["p"].get<long>();
    const long n = j["n"].get<long>();
    const double eps = j["epsilon"].get<double>();
    if (!(eps > 0.0 && eps <= 0.5)) throw ModelError("field 'epsilon' must lie in (0, 1/2]");
    const Generator gen = generator_from_string(j["generator"].get<std::string>());

    std::vector<LawGroup> groups;
    if (j.contains("shared_law")) {
        groups.push_back(LawGroup{n, law_from_json(j["shared_law"], 0)});
    } else if (j.contains("groups")) {
        long idx = 0;
        for (const auto& g : j["groups"]) {
            if (!g.contains("count") || !g.contains("law"))
                throw ModelError("group entry missing 'count' or 'law'", idx);
            groups.push_back(LawGroup{g["count"].get<long>(), law_from_json(g["law"], idx)});
            ++idx;
        }
    } else if (j.contains("laws")) {
        long idx = 0;
        for (const auto& l : j["laws"]) {
            groups.push_back(LawGroup{1, law_from_json(l, idx)});
            ++idx;
        }
    } else {
        throw ModelError("model file needs one of 'shared_law', 'groups', 'laws'");
    }
    const bool unchecked = j.value("unchecked", false);
    return unchecked ? DataModel::create_unchecked(p, n, eps, gen, std::move(groups))
                     : DataModel::create(p, n, eps, gen, std::move(groups));
}

std::string model_to_json_text(const DataModel& model) {
    json j;
    j["p"] = model.p();
    j["n"] = model.n();
    j["epsilon"] = model.epsilon();
    j["generator"] = to_string(model.generator());
    if (model.shared_law()) {
        j["shared_law"] = law_to_json(model.groups()[0].law);
    } else {
        json gs = json::array();
        for (const auto& g : model.groups())
            gs.push_back(json{{"count", g.count}, {"law", law_to_json(g.law)}});
        j["groups"] = gs;
    }
    return j.dump(2);
}

DataModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open model file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return model_from_json_text(ss.str());
}

void save_model(const DataModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ModelError("cannot write model file '" + path + "'");
    out << model_to_json_text(model) << "\n";
}

}  // namespace rmt
