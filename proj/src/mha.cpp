#include "mhalab/mha.hpp"

#include "mhalab/error.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace mhalab {

ProjectionSet::ProjectionSet(std::vector<HeadConfig> heads, bool unit_frobenius)
    : heads_(std::move(heads)), unit_frobenius_(unit_frobenius) {
    if (heads_.empty()) throw InvalidArgument("projection set needs at least one head");
    const std::size_t p = heads_.front().p();
    const std::size_t dk = heads_.front().d_k();
    for (std::size_t h = 0; h < heads_.size(); ++h) {
        const auto& hd = heads_[h];
        if (hd.p() != p || hd.d_k() != dk) {
            throw ShapeError("head " + std::to_string(h) + " has W^K " + hd.wk().shape_string() +
                             ", expected " + std::to_string(p) + "x" + std::to_string(dk));
        }
        if (unit_frobenius_ && std::abs(frobenius_norm(hd.wk()) - 1.0) > 1e-12) {
            throw InvalidArgument("head " + std::to_string(h) +
                                  " violates the unit Frobenius norm constraint");
        }
    }
}

const HeadConfig& ProjectionSet::head(std::size_t h) const {
    if (h >= heads_.size()) {
        throw InvalidArgument("head index " + std::to_string(h) + " out of range for H = " +
                              std::to_string(heads_.size()));
    }
    return heads_[h];
}

ProjectionSet ProjectionSet::permuted(const std::vector<std::size_t>& order) const {
    if (order.size() != H()) throw InvalidArgument("permutation length differs from H");
    std::vector<bool> seen(H(), false);
    std::vector<HeadConfig> out;
    out.reserve(H());
    for (std::size_t idx : order) {
        if (idx >= H() || seen[idx]) throw InvalidArgument("not a permutation of head indices");
        seen[idx] = true;
        out.push_back(heads_[idx]);
    }
    return ProjectionSet(std::move(out), unit_frobenius_);
}

ProjectionSet projection_set_from_keys(const std::vector<Matrix>& wk) {
    std::vector<HeadConfig> heads;
    heads.reserve(wk.size());
    for (const auto& w : wk) heads.push_back(HeadConfig::regression(w));
    return ProjectionSet(std::move(heads));
}

WeightKind parse_weight_kind(std::string_view name) {
    if (name == "uniform") return WeightKind::uniform;
    if (name == "geometric") return WeightKind::geometric;
    if (name == "fibonacci") return WeightKind::fibonacci;
    if (name == "custom") return WeightKind::custom;
    throw InvalidArgument("unknown weight scheme '" + std::string(name) + "'");
}

std::string_view to_string(WeightKind kind) noexcept {
    switch (kind) {
    case WeightKind::uniform: return "uniform";
    case WeightKind::geometric: return "geometric";
    case WeightKind::fibonacci: return "fibonacci";
    case WeightKind::custom: return "custom";
    }
    return "?";
}

std::string WeightScheme::label() const {
    std::string s(to_string(kind));
    if (kind == WeightKind::geometric) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "(%g)", rho);
        s += buf;
    }
    return s;
}

namespace {
Vector normalized(Vector raw) {
    const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
    for (double& a : raw) a /= total;
    return raw;
}
} // namespace

WeightScheme make_weights(WeightKind kind, std::size_t H, double rho) {
    if (H < 1) throw InvalidArgument("weights need H >= 1");
    WeightScheme w;
    w.kind = kind;
    switch (kind) {
    case WeightKind::uniform: w.alpha = normalized(Vector(H, 1.0)); break;
    case WeightKind::geometric: {
        if (!(rho > 0.0 && rho <= 1.0)) {
            throw InvalidArgument("geometric decay rho = " + std::to_string(rho) +
                                  " outside (0, 1]");
        }
        w.rho = rho;
        Vector raw(H);
        double power = 1.0;
        for (std::size_t h = 0; h < H; ++h) {
            raw[h] = power;
            power *= rho;
        }
        w.alpha = normalized(std::move(raw));
        break;
    }
    case WeightKind::fibonacci: {
        Vector raw(H);
        double a = 1.0, b = 1.0;
        for (std::size_t h = 0; h < H; ++h) {
            raw[h] = a;
            const double next = a + b;
            a = b;
            b = next;
        }
        w.alpha = normalized(std::move(raw));
        break;
    }
    case WeightKind::custom:
        throw InvalidArgument("custom weights are built with make_custom_weights");
    }
    return w;
}

WeightScheme make_custom_weights(Vector alpha) {
    if (alpha.empty()) throw InvalidArgument("custom weights need H >= 1");
    double total = 0.0;
    for (double a : alpha) {
        if (!(a > 0.0) || !std::isfinite(a)) {
            throw InvalidArgument("custom weights must be positive and finite");
        }
        total += a;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw InvalidArgument("custom weights sum to " + std::to_string(total) + ", not 1");
    }
    WeightScheme w;
    w.kind = WeightKind::custom;
    w.alpha = std::move(alpha);
    return w;
}

double mha_estimate(const ProjectionSet& proj, const WeightScheme& weights,
                    std::span<const double> query_x, const Dataset& data) {
    if (weights.H() != proj.H()) {
        throw InvalidArgument("weight scheme has " + std::to_string(weights.H()) +
                              " entries for " + std::to_string(proj.H()) + " heads");
    }
    double out = 0.0;
    for (std::size_t h = 0; h < proj.H(); ++h)
        out += weights.alpha[h] * attend(proj.head(h), query_x, data).estimate;
    return out;
}

Matrix key_complement(const ProjectionSet& proj) {
    const std::size_t p = proj.p();
    std::vector<Vector> basis;
    auto absorb = [&](Vector v) {
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& b : basis) {
                const double c = dot(b, v);
                for (std::size_t i = 0; i < p; ++i) v[i] -= c * b[i];
            }
        const double nv = norm2(v);
        if (nv < 1e-10) return false;
        for (double& x : v) x /= nv;
        basis.push_back(std::move(v));
        return true;
    };
    for (const auto& hd : proj.heads())
        for (std::size_t j = 0; j < hd.d_k(); ++j) absorb(hd.wk().column(j));
    const std::size_t key_rank = basis.size();
    for (std::size_t i = 0; i < p && basis.size() < p; ++i) {
        Vector e(p, 0.0);
        e[i] = 1.0;
        absorb(std::move(e));
    }
    Matrix out(p, basis.size() - key_rank);
    for (std::size_t j = key_rank; j < basis.size(); ++j) out.set_column(j - key_rank, basis[j]);
    return out;
}

ProjectionSet contaminate_values(const ProjectionSet& proj, const Vector& scales) {
    if (scales.size() != proj.H()) {
        throw InvalidArgument("need one contamination scale per head");
    }
    const Matrix comp = key_complement(proj);
    std::vector<HeadConfig> heads;
    for (std::size_t h = 0; h < proj.H(); ++h) {
        const HeadConfig& hd = proj.head(h);
        Vector wv = hd.wv();
        if (scales[h] != 0.0) {
            if (comp.cols() == 0) {
                throw Infeasible("no direction outside the key subspaces for value contamination");
            }
            const Vector u = comp.column(h % comp.cols());
            for (std::size_t i = 0; i < wv.size(); ++i) wv[i] += scales[h] * u[i];
        }
        heads.push_back(hd.with_values(std::move(wv), hd.wy()));
    }
    return ProjectionSet(std::move(heads), proj.unit_frobenius());
}

} // namespace mhalab
