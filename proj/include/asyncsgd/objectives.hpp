#pragma once

// Objective families with analytically certified constants.
//
//   QuadraticObjective     f(x) = 1/2 ||Ax - b||^2, A symmetric PSD, L = lambda_max(A^T A)
//   LogisticObjective      f(x) = 1/m sum_j log(1 + exp(-b_j a_j^T x)), certified L and G
//   HeterogeneousFamily    f_i(x) = base(x) + c_i^T x with sum_i c_i = 0, zeta_i = ||c_i||
//
// Every objective is immutable after construction. Client indices are zero-based; the
// single-client families treat every client index as the one global objective.

#include <cstdint>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "asyncsgd/rng.hpp"
#include "asyncsgd/types.hpp"

namespace asyncsgd {

class Objective {
public:
    virtual ~Objective() = default;

    virtual Eigen::Index dim() const = 0;
    virtual int num_clients() const { return 1; }

    /// Global objective f and its gradient.
    virtual double value(const Vector& x) const = 0;
    virtual Vector gradient(const Vector& x) const = 0;

    /// Client objective f_i; defaults to the global objective.
    virtual double client_value(ClientId /*client*/, const Vector& x) const { return value(x); }
    virtual Vector client_gradient(ClientId /*client*/, const Vector& x) const { return gradient(x); }

    /// Certified smoothness constant L (upper bound on the gradient Lipschitz constant).
    virtual double smoothness() const = 0;

    virtual nlohmann::json to_json() const = 0;
};

using ObjectivePtr = std::shared_ptr<const Objective>;

class QuadraticObjective final : public Objective {
public:
    /// `matrix` must be square with size matching `offset`. L is computed as the largest
    /// eigenvalue of A^T A.
    QuadraticObjective(Matrix matrix, Vector offset);

    Eigen::Index dim() const override { return b_.size(); }
    double value(const Vector& x) const override;
    Vector gradient(const Vector& x) const override;
    double smoothness() const override { return smoothness_; }
    nlohmann::json to_json() const override;

    const Matrix& matrix() const { return a_; }
    const Vector& offset() const { return b_; }

private:
    Matrix a_;
    Vector b_;
    double smoothness_;
};

class LogisticObjective final : public Objective {
public:
    /// Rows of `features` are the samples a_j; `labels` entries must be +1 or -1.
    LogisticObjective(Matrix features, Vector labels);

    Eigen::Index dim() const override { return features_.cols(); }
    double value(const Vector& x) const override;
    Vector gradient(const Vector& x) const override;
    double smoothness() const override { return smoothness_; }
    nlohmann::json to_json() const override;

    /// Certified bound G on ||grad f(x)|| over all x.
    double grad_bound() const { return grad_bound_; }
    const Matrix& features() const { return features_; }
    const Vector& labels() const { return labels_; }

private:
    Matrix features_;
    Vector labels_;
    double smoothness_;
    double grad_bound_;
};

class HeterogeneousFamily final : public Objective {
public:
    /// `shifts` must have zero mean (checked to round-off) and dimension matching `base`.
    HeterogeneousFamily(std::shared_ptr<const QuadraticObjective> base, std::vector<Vector> shifts);

    Eigen::Index dim() const override { return base_->dim(); }
    int num_clients() const override { return static_cast<int>(shifts_.size()); }
    double value(const Vector& x) const override { return base_->value(x); }
    Vector gradient(const Vector& x) const override { return base_->gradient(x); }
    double client_value(ClientId client, const Vector& x) const override;
    Vector client_gradient(ClientId client, const Vector& x) const override;
    double smoothness() const override { return base_->smoothness(); }
    nlohmann::json to_json() const override;

    const QuadraticObjective& base() const { return *base_; }
    const std::vector<Vector>& shifts() const { return shifts_; }
    const std::vector<double>& zeta() const { return zeta_; }
    /// n^{-1} sum_i zeta_i^2
    double zeta_sq() const { return zeta_sq_; }

private:
    std::shared_ptr<const QuadraticObjective> base_;
    std::vector<Vector> shifts_;
    std::vector<double> zeta_;
    double zeta_sq_;
};

/// Additive isotropic Gaussian noise with E||noise||^2 = sigma^2 (per-coordinate variance
/// sigma^2 / d).
struct NoiseModel {
    double sigma = 0.0;

    Vector sample(Rng& stream, Eigen::Index dim) const;
};

/// Symmetric A = Q diag(lambda) Q^T, eigenvalues equally spaced in [lambda_min, lambda_max],
/// Q from the QR factorization of a Gaussian matrix, b ~ N(0, I).
std::shared_ptr<const QuadraticObjective> make_quadratic(Eigen::Index dim, double lambda_min, double lambda_max,
                                                         std::uint64_t seed);

/// m rows a_j ~ N(0, I_d), labels uniform on {-1, +1}.
std::shared_ptr<const LogisticObjective> make_logistic(Eigen::Index m, Eigen::Index dim, std::uint64_t seed);

/// Shifts c_i are Gaussian vectors with the mean removed, scaled so that sqrt(mean zeta_i^2)
/// equals `zeta_rms`. With one client the only zero-mean shift is c_1 = 0.
std::shared_ptr<const HeterogeneousFamily> make_heterogeneous(std::shared_ptr<const QuadraticObjective> base,
                                                              int clients, double zeta_rms, std::uint64_t seed);

/// grad f_client(x) + noise, with the noise drawn from `stream` only.
/// Throws NumericDomainError if x has a non-finite entry or `client` is out of range.
Vector stochastic_gradient(const Objective& obj, ClientId client, const Vector& x, const NoiseModel& noise,
                           Rng& stream);

ObjectivePtr objective_from_json(const nlohmann::json& doc);

nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& doc);

}  // namespace asyncsgd
