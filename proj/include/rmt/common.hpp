#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rmt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using Cx = std::complex<double>;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Construction/validation failures of models and laws.
struct ModelError : Error {
    explicit ModelError(const std::string& msg, long column = -1)
        : Error(msg), column(column) {}
    long column;  // offending column/group index, -1 if not applicable
};

// Pole proximity, wrong half-plane, nonpositive variance, ...
struct DomainError : Error {
    explicit DomainError(const std::string& msg, long index = -1)
        : Error(msg), index(index) {}
    long index;
};

struct ConvergenceError : Error {
    ConvergenceError(const std::string& msg, double residual, int iterations)
        : Error(msg), last_residual(residual), iterations(iterations) {}
    double last_residual;
    int iterations;
};

// An iterate left the half-plane the solver was asked to stay in.
struct DomainEscapeError : Error {
    DomainEscapeError(const std::string& msg, int iteration)
        : Error(msg), iteration(iteration) {}
    int iteration;
};

struct ConditioningError : Error {
    ConditioningError(const std::string& msg, double estimate)
        : Error(msg), estimate(estimate) {}
    double estimate;
};

// Degenerate samples, all-discarded averages, failed fits.
struct EstimationError : Error {
    using Error::Error;
};

// Distance from z to the real segment [0, hi], hi >= 0.
inline double segment_distance(Cx z, double hi) {
    const double x = z.real(), y = z.imag();
    if (x < 0.0) return std::hypot(x, y);
    if (x > hi) return std::hypot(x - hi, y);
    return std::abs(y);
}

// Neumaier compensated summation; deterministic given the add order.
class NeumaierSum {
  public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double median_inplace(std::vector<double>& v) {
    if (v.empty()) throw EstimationError("median of empty sample");
    const size_t h = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + h, v.end());
    double m = v[h];
    if (v.size() % 2 == 0) {
        std::nth_element(v.begin(), v.begin() + h - 1, v.begin() + h);
        m = 0.5 * (m + v[h - 1]);
    }
    return m;
}

}  // namespace rmt
