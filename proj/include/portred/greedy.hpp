#pragma once

#include "portred/portspace.hpp"

#include <numeric>

namespace portred {

/// Norm-equivalence and a priori constants; all default to 1.
struct GreedyConstants {
    double c1 = 1.0;
    double c2 = 1.0;
    double big_c1 = 1.0;  // a priori constant
    double big_c2 = 1.0;  // stopping-threshold constant
};

/// One training parameter: a pair geometry with its transfer eigenpairs.
struct TrainingMember {
    std::string label;
    std::shared_ptr<const TransferContext> ctx;
    TransferEigs eigs;
    Matrix kernel;               // kernel traces on Gamma_in
    std::optional<Vector> data;  // data mode, when a load is present
};

struct TrainingSet {
    std::vector<TrainingMember> members;
    Matrix greedy_metric;
    PortMetricKind greedy_kind = PortMetricKind::l2;

    [[nodiscard]] int size() const { return static_cast<int>(members.size()); }
};

inline TrainingMember make_training_member(std::string label, const ComponentPairMesh& pair, const OperatorSpec& op,
                                           PortMetricKind construction = PortMetricKind::lifting,
                                           const LoadFunction& source = nullptr)
{
    TrainingMember m;
    m.label = std::move(label);
    auto ctx = std::make_shared<TransferContext>(make_transfer_context(pair, op, construction));
    m.eigs = transfer_eigs(*ctx);
    m.kernel = kernel_traces(*ctx);
    if (source) m.data = data_mode(*ctx, source);
    m.ctx = std::move(ctx);
    return m;
}

/// Collects members and fixes the greedy metric. With the lifting metric the first member is
/// the reference geometry.
inline TrainingSet make_training_set(std::vector<TrainingMember> members, PortMetricKind greedy_kind = PortMetricKind::l2)
{
    if (members.empty()) throw Error("training set is empty");
    const int n_in = members.front().ctx->port_dofs();
    for (const auto& m : members) {
        if (m.ctx->port_dofs() != n_in) throw Error("training members disagree on the number of port DOFs");
    }
    TrainingSet set;
    set.greedy_kind = greedy_kind;
    set.greedy_metric = build_range_metric(greedy_kind, members.front().ctx->pair, members.front().ctx->op);
    set.members = std::move(members);
    return set;
}

/// Optimal local space sized to the tolerance, plus the frame spanning the deviation set:
/// kernel traces and data mode normalized in the greedy metric, spectral modes as computed.
struct LocalSpace {
    PortSpace space;
    Matrix frame;
    int n = 0;
};

inline LocalSpace local_space_to_tolerance(const TrainingMember& member, double eps, const GreedyConstants& consts,
                                           int multiplicity, const Matrix& greedy_metric)
{
    if (!(eps > 0.0)) throw Error("tolerance must be positive");
    if (multiplicity < 1) throw Error("port multiplicity must be >= 1");
    const double scale = consts.c1 * consts.c2 * consts.big_c1 * multiplicity;
    const auto& lam = member.eigs.values;
    const bool complete = member.eigs.source_vectors.rows() == lam.size();
    int n = 0;
    while (true) {
        const double next = n < lam.size() ? lam(n) : 0.0;
        if (n >= lam.size() && !complete)
            throw Error("tolerance not reached with the computed eigenpairs of '" + member.label + "'; compute more");
        if (scale * std::sqrt(std::max(next, 0.0)) <= 0.5 * eps) break;
        ++n;
    }
    LocalSpace out;
    out.n = n;
    out.space = optimal_space(member.eigs, member.kernel, member.data, n, member.ctx->range_metric, member.ctx->range_kind);

    const auto kernel_frame = orthonormalize(Matrix(greedy_metric.rows(), 0), member.kernel, greedy_metric).basis;
    std::vector<Vector> cols;
    for (Eigen::Index k = 0; k < kernel_frame.cols(); ++k) cols.emplace_back(kernel_frame.col(k));
    if (member.data) {
        const double nrm = m_norm(*member.data, greedy_metric);
        if (nrm > 0.0) cols.emplace_back(*member.data / nrm);
    }
    for (int j = 0; j < n; ++j) cols.emplace_back(member.eigs.modes.col(j));
    out.frame.resize(greedy_metric.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.frame.col(static_cast<Eigen::Index>(k)) = cols[k];
    return out;
}

struct Deviation {
    double value = 0.0;  // sqrt of the largest eigenvalue of Z
    Vector kappa;        // frame * psi_1
    Matrix z;
};

/// Worst projection error of the unit coefficient ball of `frame` onto span(basis), basis
/// orthonormal in `metric`.
inline Deviation deviation(const Matrix& frame, const Matrix& basis, const Matrix& metric)
{
    Deviation d;
    if (frame.cols() == 0) {
        d.kappa = Vector::Zero(frame.rows());
        d.z = Matrix(0, 0);
        return d;
    }
    Matrix residual = frame;
    if (basis.cols() > 0) residual -= basis * (basis.transpose() * (metric * frame));
    d.z = residual.transpose() * metric * residual;
    const auto eig = symmetric_eigs_descending(d.z);
    d.value = std::sqrt(std::max(eig.values(0), 0.0));
    d.kappa = frame * eig.vectors.col(0);
    return d;
}

struct GreedyStep {
    int iteration = 0;
    int basis_dim = 0;               // m before the update
    std::vector<double> deviations;  // per training member
    int chosen = -1;                 // -1 on the terminating step
    double deviation = 0.0;
};

struct GreedyResult {
    std::vector<int> selected;  // training indices, repeats allowed
    PortSpace space;            // orthonormal in the greedy metric
    std::vector<GreedyStep> history;
    std::vector<LocalSpace> local;
    double threshold = 0.0;
    int initial_dim = 0;
};

inline double greedy_threshold(double eps, const GreedyConstants& consts, int multiplicity)
{
    return eps / (eps + 2.0 * consts.big_c2 * consts.c1 * consts.c2 * multiplicity);
}

/// Spectral greedy: starts from the kernel traces and adds the worst-approximated direction of
/// the worst-approximated local space until every deviation is below the threshold.
/// `multiplicity` scales both the local tolerance test and the threshold denominator.
inline GreedyResult spectral_greedy(const TrainingSet& train, double eps, const GreedyConstants& consts = {},
                                    int multiplicity = 1)
{
    const Matrix& metric = train.greedy_metric;
    GreedyResult result;
    result.threshold = greedy_threshold(eps, consts, multiplicity);
    int cap = 0;
    for (const auto& m : train.members) {
        result.local.push_back(local_space_to_tolerance(m, eps, consts, multiplicity, metric));
        cap += result.local.back().space.dim();
    }

    Matrix basis = orthonormalize(Matrix(metric.rows(), 0), train.members.front().kernel, metric).basis;
    result.space.metric = train.greedy_kind;
    for (Eigen::Index k = 0; k < basis.cols(); ++k) result.space.modes.push_back({ModeKind::kernel, 0.0});
    result.initial_dim = static_cast<int>(basis.cols());

    for (int iteration = 0;; ++iteration) {
        if (iteration > cap) throw Error("spectral greedy did not terminate within the iteration cap");
        GreedyStep step;
        step.iteration = iteration;
        step.basis_dim = static_cast<int>(basis.cols());
        std::vector<Deviation> devs;
        for (const auto& local : result.local) {
            devs.push_back(deviation(local.frame, basis, metric));
            step.deviations.push_back(devs.back().value);
        }
        std::vector<int> order(devs.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return step.deviations[static_cast<std::size_t>(a)] > step.deviations[static_cast<std::size_t>(b)];
        });
        step.deviation = step.deviations[static_cast<std::size_t>(order.front())];
        if (step.deviation <= result.threshold) {
            result.history.push_back(step);
            break;
        }
        bool extended = false;
        for (int candidate : order) {
            if (step.deviations[static_cast<std::size_t>(candidate)] <= result.threshold) break;
            const auto ortho = orthonormalize(basis, devs[static_cast<std::size_t>(candidate)].kappa, metric, 1e-12);
            if (!ortho.kept.front()) continue;
            basis = ortho.basis;
            step.chosen = candidate;
            step.deviation = step.deviations[static_cast<std::size_t>(candidate)];
            result.selected.push_back(candidate);
            result.space.modes.push_back({ModeKind::greedy, step.deviation});
            extended = true;
            break;
        }
        result.history.push_back(step);
        if (!extended) throw Error("spectral greedy stalled: every worst direction is already in the port space");
    }
    result.space.basis = basis;
    return result;
}

/// Numerical dimension of the union of the local spaces.
inline int union_dimension(const std::vector<LocalSpace>& local, const Matrix& metric, double rel_tol = 1e-8)
{
    Eigen::Index cols = 0;
    for (const auto& l : local) cols += l.space.dim();
    Matrix all(metric.rows(), cols);
    Eigen::Index c = 0;
    for (const auto& l : local) {
        // each local basis is orthonormal in its own metric; renormalize columns in the common one
        for (Eigen::Index k = 0; k < l.space.dim(); ++k, ++c) {
            const Vector v = l.space.basis.col(k);
            all.col(c) = v / m_norm(v, metric);
        }
    }
    return numerical_rank(all, metric, rel_tol);
}

}  // namespace portred
