#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "qkdnet/errors.hpp"
#include "qkdnet/topology.hpp"

namespace qkdnet {

/// One measured end-to-end budget: the spans the light crossed (ordered from
/// the sender), the cross-connection count, and the measured loss.
struct MeasuredBudget {
    std::string link;
    std::vector<std::string> span_ids;
    int n_cross_connects = 0;
    double budget_db = 0.0;
};

struct LossDecomposition {
    double terminal_total_db = 0.0;
    double oxc_db = 1.0;
    std::map<std::string, double> span_loss_db;
    std::vector<double> residuals_db; // per input row, measured - reconstructed

    double reconstruct(const MeasuredBudget& row) const {
        double v = terminal_total_db + row.n_cross_connects * oxc_db;
        for (const auto& sid : row.span_ids) {
            auto it = span_loss_db.find(sid);
            if (it == span_loss_db.end())
                throw ValidationError("decomposition has no span '" + sid + "'");
            v += it->second;
        }
        return v;
    }

    double max_abs_residual_db() const {
        double m = 0.0;
        for (double r : residuals_db) m = std::max(m, std::fabs(r));
        return m;
    }
};

namespace detail {

/// Dense least squares by Householder QR. A is m x n, row-major. Throws
/// UnderdeterminedError when the columns are not independent.
inline std::vector<double> lstsq(std::vector<double> A, std::vector<double> b,
                                 std::size_t m, std::size_t n) {
    if (m < n) throw UnderdeterminedError("fewer equations than unknowns");
    auto at = [&](std::size_t i, std::size_t j) -> double& { return A[i * n + j]; };

    double col_scale = 0.0;
    for (double v : A) col_scale = std::max(col_scale, std::fabs(v));
    if (col_scale == 0.0) throw UnderdeterminedError("zero design matrix");

    for (std::size_t k = 0; k < n; ++k) {
        double norm = 0.0;
        for (std::size_t i = k; i < m; ++i) norm += at(i, k) * at(i, k);
        norm = std::sqrt(norm);
        if (norm <= 1e-10 * col_scale)
            throw UnderdeterminedError("rank-deficient system at column " + std::to_string(k));
        if (at(k, k) > 0) norm = -norm;

        // Householder vector stored in place of column k below the diagonal.
        double vk = at(k, k) - norm;
        at(k, k) = norm;
        double vnorm2 = vk * vk;
        std::vector<double> v(m - k - 1);
        for (std::size_t i = k + 1; i < m; ++i) {
            v[i - k - 1] = at(i, k);
            vnorm2 += at(i, k) * at(i, k);
        }
        if (vnorm2 == 0.0) continue;

        for (std::size_t j = k + 1; j < n; ++j) {
            double dot = vk * at(k, j);
            for (std::size_t i = k + 1; i < m; ++i) dot += v[i - k - 1] * at(i, j);
            double f = 2.0 * dot / vnorm2;
            at(k, j) -= f * vk;
            for (std::size_t i = k + 1; i < m; ++i) at(i, j) -= f * v[i - k - 1];
        }
        double dot = vk * b[k];
        for (std::size_t i = k + 1; i < m; ++i) dot += v[i - k - 1] * b[i];
        double f = 2.0 * dot / vnorm2;
        b[k] -= f * vk;
        for (std::size_t i = k + 1; i < m; ++i) b[i] -= f * v[i - k - 1];
    }

    std::vector<double> x(n);
    for (std::size_t kk = n; kk-- > 0;) {
        double s = b[kk];
        for (std::size_t j = kk + 1; j < n; ++j) s -= at(kk, j) * x[j];
        x[kk] = s / at(kk, kk);
    }
    return x;
}

} // namespace detail

/// Least-squares split of measured budgets into one lumped terminal insertion
/// plus per-span losses, with the cross-connection loss held fixed. Spans that
/// appear in a single row absorb that row exactly; shared spans are balanced
/// across rows.
inline LossDecomposition fit_component_losses(const std::vector<MeasuredBudget>& rows,
                                              double oxc_db = 1.0) {
    if (rows.empty()) throw UnderdeterminedError("no measured rows");

    std::vector<std::string> span_ids;
    for (const auto& r : rows)
        for (const auto& s : r.span_ids)
            if (std::find(span_ids.begin(), span_ids.end(), s) == span_ids.end())
                span_ids.push_back(s);

    const std::size_t m = rows.size();
    const std::size_t n = 1 + span_ids.size();
    std::vector<double> A(m * n, 0.0), b(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        A[i * n] = 1.0; // terminal lump
        for (const auto& s : rows[i].span_ids) {
            std::size_t j = std::find(span_ids.begin(), span_ids.end(), s) - span_ids.begin();
            A[i * n + 1 + j] += 1.0;
        }
        b[i] = rows[i].budget_db - rows[i].n_cross_connects * oxc_db;
    }

    std::vector<double> x = detail::lstsq(A, b, m, n);

    LossDecomposition d;
    d.oxc_db = oxc_db;
    d.terminal_total_db = x[0];
    for (std::size_t j = 0; j < span_ids.size(); ++j) d.span_loss_db[span_ids[j]] = x[1 + j];

    for (double v : x)
        if (v < -1e-6)
            throw CalibrationError("loss fit produced a negative component");
    d.terminal_total_db = std::max(0.0, d.terminal_total_db);
    for (auto& [k, v] : d.span_loss_db) v = std::max(0.0, v);

    d.residuals_db.reserve(m);
    for (const auto& r : rows) d.residuals_db.push_back(r.budget_db - d.reconstruct(r));
    return d;
}

/// Writes fitted span losses and an even tx/rx split of the terminal lump
/// back onto a topology, so route_loss_db reproduces the fitted budgets.
inline void apply_decomposition(Topology& topo, const LossDecomposition& d) {
    for (auto& s : topo.spans) {
        auto it = d.span_loss_db.find(s.id);
        if (it != d.span_loss_db.end()) s.span_loss_db = it->second;
    }
    for (auto& nde : topo.nodes) {
        nde.oxc_loss_db = d.oxc_db;
        nde.terminal_tx_loss_db = d.terminal_total_db / 2.0;
        nde.terminal_rx_loss_db = d.terminal_total_db / 2.0;
    }
}

} // namespace qkdnet
