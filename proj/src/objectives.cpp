#include "asyncsgd/objectives.hpp"

#include <cmath>
#include <string>

namespace asyncsgd {
namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) {
    if (z > 0.0) return z + std::log1p(std::exp(-z));
    return std::log1p(std::exp(z));
}

// 1 / (1 + exp(-z)) without overflow.
double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& doc) {
    if (!doc.is_array() || doc.empty()) throw InvalidSpecError("matrix must be a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(doc.size());
    const auto cols = static_cast<Eigen::Index>(doc.at(0).size());
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = doc.at(static_cast<std::size_t>(r));
        if (static_cast<Eigen::Index>(row.size()) != cols) throw InvalidSpecError("ragged matrix rows");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
}

void require_finite(const Vector& x) {
    if (!x.allFinite()) throw NumericDomainError("non-finite parameter vector");
}

}  // namespace

nlohmann::json vector_to_json(const Vector& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Vector vector_from_json(const nlohmann::json& doc) {
    if (!doc.is_array()) throw InvalidSpecError("vector must be an array");
    Vector v(static_cast<Eigen::Index>(doc.size()));
    for (std::size_t i = 0; i < doc.size(); ++i) v[static_cast<Eigen::Index>(i)] = doc[i].get<double>();
    return v;
}

// ---------------------------------------------------------------------------------------------
// Quadratic

QuadraticObjective::QuadraticObjective(Matrix matrix, Vector offset) : a_(std::move(matrix)), b_(std::move(offset)) {
    if (a_.rows() != a_.cols() || a_.rows() != b_.size() || b_.size() < 1) {
        throw InvalidSpecError("quadratic objective needs a square matrix matching the offset vector");
    }
    const Matrix gram = a_.transpose() * a_;
    Eigen::SelfAdjointEigenSolver<Matrix> solver(gram, Eigen::EigenvaluesOnly);
    smoothness_ = solver.eigenvalues().maxCoeff();
}

double QuadraticObjective::value(const Vector& x) const {
    return 0.5 * (a_ * x - b_).squaredNorm();
}

Vector QuadraticObjective::gradient(const Vector& x) const {
    return a_.transpose() * (a_ * x - b_);
}

nlohmann::json QuadraticObjective::to_json() const {
    return {{"family", "quadratic"},
            {"matrix_A", matrix_to_json(a_)},
            {"vector_b", vector_to_json(b_)},
            {"smoothness_L", smoothness_}};
}

std::shared_ptr<const QuadraticObjective> make_quadratic(Eigen::Index dim, double lambda_min, double lambda_max,
                                                         std::uint64_t seed) {
    if (dim < 2) throw InvalidSpecError("make_quadratic: dim must be >= 2");
    if (!(lambda_min > 0.0) || !(lambda_min <= lambda_max)) {
        throw InvalidSpecError("make_quadratic: need 0 < lambda_min <= lambda_max");
    }
    Rng rng(derive_seed(seed, streams::kObjective, 0));

    Matrix gauss(dim, dim);
    for (Eigen::Index c = 0; c < dim; ++c)
        for (Eigen::Index r = 0; r < dim; ++r) gauss(r, c) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(gauss);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    // Sign-normalize so Q is Haar distributed.
    for (Eigen::Index c = 0; c < dim; ++c) {
        if (r(c, c) < 0.0) q.col(c) *= -1.0;
    }

    Vector eig(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        eig[i] = lambda_min + (lambda_max - lambda_min) * static_cast<double>(i) / static_cast<double>(dim - 1);
    }
    Matrix a = q * eig.asDiagonal() * q.transpose();
    a = 0.5 * (a + a.transpose()).eval();

    Vector b = rng.normal_vector(dim);
    return std::make_shared<const QuadraticObjective>(std::move(a), std::move(b));
}

// ---------------------------------------------------------------------------------------------
// Logistic

LogisticObjective::LogisticObjective(Matrix features, Vector labels)
    : features_(std::move(features)), labels_(std::move(labels)) {
    if (features_.rows() < 1 || features_.cols() < 1 || features_.rows() != labels_.size()) {
        throw InvalidSpecError("logistic objective needs m >= 1 rows and one label per row");
    }
    for (Eigen::Index j = 0; j < labels_.size(); ++j) {
        if (labels_[j] != 1.0 && labels_[j] != -1.0) throw InvalidSpecError("logistic labels must be +1 or -1");
    }
    const auto m = static_cast<double>(features_.rows());
    smoothness_ = 0.25 * features_.rowwise().squaredNorm().sum() / m;
    grad_bound_ = features_.rowwise().norm().sum() / m;
}

double LogisticObjective::value(const Vector& x) const {
    const Vector margins = (features_ * x).cwiseProduct(labels_);
    double total = 0.0;
    for (Eigen::Index j = 0; j < margins.size(); ++j) total += softplus(-margins[j]);
    return total / static_cast<double>(features_.rows());
}

Vector LogisticObjective::gradient(const Vector& x) const {
    const Vector margins = (features_ * x).cwiseProduct(labels_);
    Vector weights(margins.size());
    for (Eigen::Index j = 0; j < margins.size(); ++j) weights[j] = -labels_[j] * sigmoid(-margins[j]);
    return features_.transpose() * weights / static_cast<double>(features_.rows());
}

nlohmann::json LogisticObjective::to_json() const {
    return {{"family", "logistic"},
            {"features", matrix_to_json(features_)},
            {"labels", vector_to_json(labels_)},
            {"smoothness_L", smoothness_},
            {"grad_bound_G", grad_bound_}};
}

std::shared_ptr<const LogisticObjective> make_logistic(Eigen::Index m, Eigen::Index dim, std::uint64_t seed) {
    if (m < 1 || dim < 1) throw InvalidSpecError("make_logistic: need m >= 1 and dim >= 1");
    Rng rng(derive_seed(seed, streams::kObjective, 1));
    Matrix features(m, dim);
    Vector labels(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index c = 0; c < dim; ++c) features(j, c) = rng.normal();
        labels[j] = rng.uniform() < 0.5 ? -1.0 : 1.0;
    }
    return std::make_shared<const LogisticObjective>(std::move(features), std::move(labels));
}

// ---------------------------------------------------------------------------------------------
// Heterogeneous

HeterogeneousFamily::HeterogeneousFamily(std::shared_ptr<const QuadraticObjective> base, std::vector<Vector> shifts)
    : base_(std::move(base)), shifts_(std::move(shifts)) {
    if (!base_ || shifts_.empty()) throw InvalidSpecError("heterogeneous family needs a base and >= 1 client");
    Vector total = Vector::Zero(base_->dim());
    double scale = 0.0;
    zeta_.reserve(shifts_.size());
    for (const auto& c : shifts_) {
        if (c.size() != base_->dim()) throw InvalidSpecError("client shift dimension mismatch");
        total += c;
        zeta_.push_back(c.norm());
        scale = std::max(scale, c.norm());
    }
    if (total.norm() > 1e-9 * std::max(1.0, scale) * static_cast<double>(shifts_.size())) {
        throw InvalidSpecError("client shifts must sum to zero");
    }
    double sq = 0.0;
    for (double z : zeta_) sq += z * z;
    zeta_sq_ = sq / static_cast<double>(zeta_.size());
}

double HeterogeneousFamily::client_value(ClientId client, const Vector& x) const {
    return base_->value(x) + shifts_.at(static_cast<std::size_t>(client)).dot(x);
}

Vector HeterogeneousFamily::client_gradient(ClientId client, const Vector& x) const {
    return base_->gradient(x) + shifts_.at(static_cast<std::size_t>(client));
}

nlohmann::json HeterogeneousFamily::to_json() const {
    nlohmann::json shifts = nlohmann::json::array();
    for (const auto& c : shifts_) shifts.push_back(vector_to_json(c));
    return {{"family", "heterogeneous"},
            {"base", base_->to_json()},
            {"shifts", std::move(shifts)},
            {"zeta_i", zeta_},
            {"zeta_sq", zeta_sq_}};
}

std::shared_ptr<const HeterogeneousFamily> make_heterogeneous(std::shared_ptr<const QuadraticObjective> base,
                                                              int clients, double zeta_rms, std::uint64_t seed) {
    if (clients < 1) throw InvalidSpecError("make_heterogeneous: need at least one client");
    if (!(zeta_rms >= 0.0)) throw InvalidSpecError("make_heterogeneous: zeta must be >= 0");
    Rng rng(derive_seed(seed, streams::kObjective, 2));
    const Eigen::Index d = base->dim();
    std::vector<Vector> shifts;
    shifts.reserve(static_cast<std::size_t>(clients));
    Vector mean = Vector::Zero(d);
    for (int i = 0; i < clients; ++i) {
        shifts.push_back(rng.normal_vector(d));
        mean += shifts.back();
    }
    mean /= static_cast<double>(clients);
    double sq = 0.0;
    for (auto& c : shifts) {
        c -= mean;
        sq += c.squaredNorm();
    }
    const double rms = std::sqrt(sq / clients);
    for (auto& c : shifts) {
        if (clients == 1 || rms == 0.0) {
            c.setZero();
        } else {
            c *= zeta_rms / rms;
        }
    }
    return std::make_shared<const HeterogeneousFamily>(std::move(base), std::move(shifts));
}

// ---------------------------------------------------------------------------------------------

Vector NoiseModel::sample(Rng& stream, Eigen::Index dim) const {
    if (sigma == 0.0) return Vector::Zero(dim);
    const double scale = sigma / std::sqrt(static_cast<double>(dim));
    return scale * stream.normal_vector(dim);
}

Vector stochastic_gradient(const Objective& obj, ClientId client, const Vector& x, const NoiseModel& noise,
                           Rng& stream) {
    require_finite(x);
    if (client < 0 || client >= obj.num_clients()) {
        throw NumericDomainError("client index " + std::to_string(client) + " out of range");
    }
    Vector g = obj.client_gradient(client, x);
    if (noise.sigma > 0.0) g += noise.sample(stream, obj.dim());
    return g;
}

ObjectivePtr objective_from_json(const nlohmann::json& doc) {
    const std::string family = doc.at("family").get<std::string>();
    if (family == "quadratic") {
        return std::make_shared<const QuadraticObjective>(matrix_from_json(doc.at("matrix_A")),
                                                          vector_from_json(doc.at("vector_b")));
    }
    if (family == "logistic") {
        return std::make_shared<const LogisticObjective>(matrix_from_json(doc.at("features")),
                                                         vector_from_json(doc.at("labels")));
    }
    if (family == "heterogeneous") {
        auto base = std::dynamic_pointer_cast<const QuadraticObjective>(objective_from_json(doc.at("base")));
        if (!base) throw InvalidSpecError("heterogeneous base must be quadratic");
        std::vector<Vector> shifts;
        for (const auto& c : doc.at("shifts")) shifts.push_back(vector_from_json(c));
        return std::make_shared<const HeterogeneousFamily>(std::move(base), std::move(shifts));
    }
    throw InvalidSpecError("unknown objective family '" + family + "'");
}

}  // namespace asyncsgd
