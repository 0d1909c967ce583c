#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rmt/common.hpp"

namespace rmt {

enum class Generator { gaussian, lipschitz_of_gaussian, bounded_independent };

std::string to_string(Generator g);
Generator generator_from_string(const std::string& s);

// Law of one column: mean, centered covariance, cached second moment
// Sigma = C + mean mean^T and the clamped symmetric square root of C.
class ColumnLaw {
  public:
    ColumnLaw(Vec mean, Mat cov);

    const Vec& mean() const { return mean_; }
    const Mat& cov() const { return cov_; }
    const Mat& second_moment() const { return second_moment_; }
    const Mat& sqrt_cov() const { return sqrt_cov_; }
    double trace_second_moment() const { return trace_second_moment_; }
    Eigen::Index dim() const { return mean_.size(); }
    // s such that Sigma == s I exactly (within 1e-14 relative), else nullopt;
    // resolvent iterations collapse to scalars for such laws
    std::optional<double> isotropic_scale() const { return isotropic_scale_; }

  private:
    Vec mean_;
    Mat cov_;
    Mat second_moment_;
    Mat sqrt_cov_;
    double trace_second_moment_;
    std::optional<double> isotropic_scale_;
};

struct LawGroup {
    long count;
    ColumnLaw law;
};

struct ValidationReport {
    double top_eigenvalue = 0.0;    // of (1/n) sum_i Sigma_i
    double min_trace_over_n = 0.0;  // min_i tr(Sigma_i)/n
    double margin_bound = 0.0;      // 1 - 2 epsilon
    bool pass = false;
    std::vector<std::string> failures;
};

// Immutable; copies share state and are safe across threads.
class DataModel {
  public:
    static DataModel create(long p, long n, double epsilon, Generator gen,
                            std::vector<LawGroup> groups);
    // Skips the spectral-margin invariant; everything else still checked.
    static DataModel create_unchecked(long p, long n, double epsilon, Generator gen,
                                      std::vector<LawGroup> groups);
    static DataModel shared(long p, long n, double epsilon, Generator gen, ColumnLaw law);

    long p() const;
    long n() const;
    double epsilon() const;
    Generator generator() const;
    const std::vector<LawGroup>& groups() const;
    const ColumnLaw& law_for_column(long i) const;
    bool shared_law() const;  // single group covering all columns

    // (1/n) sum_i Sigma_i
    Mat mean_second_moment() const;

    struct Impl;  // opaque shared state

  private:
    std::shared_ptr<const Impl> impl_;
    explicit DataModel(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
};

ValidationReport validate_model(const DataModel& model);

struct SampleMatrix {
    Mat data;  // p x n
    std::uint64_t seed = 0;
    std::optional<DataModel> model;
};

// Columns are independent draws from the model's laws; pure in (model, seed).
SampleMatrix sample(const DataModel& model, std::uint64_t seed);

// i.i.d. entries uniform on [-sqrt(3), sqrt(3)] (mean 0, unit variance).
SampleMatrix sample_bounded(long p, long n, std::uint64_t seed);

// Model files (JSON): {p, n, epsilon, generator,
//   laws:[{mean, cov}] | shared_law:{mean, cov} | groups:[{count, law}]}
DataModel model_from_json_text(const std::string& text);
std::string model_to_json_text(const DataModel& model);
DataModel load_model(const std::string& path);
void save_model(const DataModel& model, const std::string& path);

}  // namespace rmt
