#include "mhalab/diversity.hpp"

#include "mhalab/seeding.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace mhalab {

namespace {

std::vector<Matrix> keys_of(const ProjectionSet& proj) {
    std::vector<Matrix> keys;
    keys.reserve(proj.H());
    for (const auto& hd : proj.heads()) keys.push_back(hd.wk());
    return keys;
}

void check_pair(const ProjectionSet& proj, std::size_t h, std::size_t h2) {
    if (h >= proj.H() || h2 >= proj.H()) {
        throw InvalidArgument("head pair (" + std::to_string(h) + ", " + std::to_string(h2) +
                              ") out of range for H = " + std::to_string(proj.H()));
    }
}

double normalized_overlap(const Matrix& u, const Matrix& u2) {
    // |U^T U2|_F^2 = sum_j cos^2 theta_j
    return frobenius_sq(matmul_tn(u, u2));
}

Matrix random_gaussian(std::size_t rows, std::size_t cols, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
}

} // namespace

Matrix cross_gram(const ProjectionSet& proj, std::size_t h, std::size_t h2) {
    check_pair(proj, h, h2);
    if (h == h2) throw InvalidArgument("cross_gram needs two distinct heads");
    const double dk = static_cast<double>(proj.d_k());
    return (1.0 / dk) * matmul_tn(proj.head(h).wk(), proj.head(h2).wk());
}

Vector principal_angles(const ProjectionSet& proj, std::size_t h, std::size_t h2) {
    check_pair(proj, h, h2);
    const Matrix u = qr_orthonormalize(proj.head(h).wk());
    const Matrix u2 = qr_orthonormalize(proj.head(h2).wk());
    const Vector sv = singular_values(matmul_tn(u, u2));
    Vector angles(sv.size());
    for (std::size_t j = 0; j < sv.size(); ++j) angles[j] = std::acos(std::clamp(sv[j], -1.0, 1.0));
    return angles;
}

HdiValue hdi(const std::vector<Matrix>& keys) {
    const std::size_t H = keys.size();
    if (H < 2) throw NeedsTwoHeads();
    const double dk = static_cast<double>(keys.front().cols());
    std::vector<Matrix> bases;
    bases.reserve(H);
    for (const auto& k : keys) bases.push_back(qr_orthonormalize(k));
    double raw = 0.0;
    double norm = 0.0;
    for (std::size_t a = 0; a < H; ++a)
        for (std::size_t b = a + 1; b < H; ++b) {
            raw += frobenius_sq(matmul_tn(keys[a], keys[b])) / (dk * dk);
            norm += normalized_overlap(bases[a], bases[b]) / dk;
        }
    const double pairs = 0.5 * static_cast<double>(H * (H - 1));
    return {1.0 - raw / pairs, 1.0 - norm / pairs};
}

HdiValue hdi(const ProjectionSet& proj) { return hdi(keys_of(proj)); }

DiversityReport diversity_report(const ProjectionSet& proj) {
    const std::size_t H = proj.H();
    if (H < 2) throw NeedsTwoHeads();
    DiversityReport rep;
    rep.gram_frobsq = Matrix(H, H);
    rep.gram_frobsq_normalized = Matrix(H, H);
    std::vector<Matrix> bases;
    for (const auto& hd : proj.heads()) bases.push_back(qr_orthonormalize(hd.wk()));
    for (std::size_t a = 0; a < H; ++a)
        for (std::size_t b = a + 1; b < H; ++b) {
            const double g = frobenius_sq(cross_gram(proj, a, b));
            rep.gram_frobsq(a, b) = rep.gram_frobsq(b, a) = g;
            const double gn = normalized_overlap(bases[a], bases[b]);
            rep.gram_frobsq_normalized(a, b) = rep.gram_frobsq_normalized(b, a) = gn;
            rep.principal_angles[{a, b}] = principal_angles(proj, a, b);
        }
    const HdiValue v = hdi(proj);
    rep.hdi = v.hdi;
    rep.hdi_normalized = v.hdi_normalized;
    return rep;
}

ProjectionSet make_projection_family(std::size_t p, std::size_t d_k, std::size_t H, double mix,
                                     std::uint64_t seed) {
    if (H < 1 || d_k < 1) throw InvalidArgument("family needs H >= 1 and d_k >= 1");
    if (d_k > p) throw Infeasible("d_k = " + std::to_string(d_k) + " exceeds p = " + std::to_string(p));
    if (!(mix >= 0.0 && mix <= 1.0)) throw InvalidArgument("mix must lie in [0, 1]");
    const bool orthogonal_fits = H * d_k <= p;
    if (mix == 1.0 && !orthogonal_fits) {
        throw Infeasible("infeasible: H * d_k = " + std::to_string(H * d_k) +
                         " exceeds p = " + std::to_string(p));
    }
    Rng rng(derive_seed(seed, "projection-family"));
    const Matrix basis = qr_orthonormalize(random_gaussian(p, p, rng));
    const Matrix shared = column_block(basis, 0, d_k);

    std::vector<Matrix> keys;
    keys.reserve(H);
    for (std::size_t h = 0; h < H; ++h) {
        Matrix target = orthogonal_fits ? column_block(basis, h * d_k, d_k)
                                        : (h == 0 ? shared
                                                  : qr_orthonormalize(random_gaussian(p, d_k, rng)));
        keys.push_back(qr_orthonormalize((1.0 - mix) * shared + mix * target));
    }
    return projection_set_from_keys(keys);
}

ProjectionSet with_key_scale(const ProjectionSet& proj, double key_scale) {
    if (!(key_scale > 0.0) || !std::isfinite(key_scale)) {
        throw InvalidArgument("key_scale must be positive");
    }
    const double factor = key_scale * std::pow(static_cast<double>(proj.d_k()), 0.25);
    std::vector<HeadConfig> heads;
    for (const auto& hd : proj.heads()) {
        const bool tied = hd.wq() == hd.wk();
        Matrix wk = factor * hd.wk();
        Matrix wq = tied ? wk : hd.wq();
        heads.emplace_back(std::move(wq), std::move(wk), hd.wv(), hd.wy());
    }
    return ProjectionSet(std::move(heads));
}

double gram_objective(const std::vector<Matrix>& keys) {
    if (keys.empty()) return 0.0;
    const double dk = static_cast<double>(keys.front().cols());
    double j = 0.0;
    for (std::size_t a = 0; a < keys.size(); ++a)
        for (std::size_t b = a + 1; b < keys.size(); ++b)
            j += frobenius_sq(matmul_tn(keys[a], keys[b])) / (dk * dk);
    return j;
}

std::vector<Matrix> gram_objective_gradient(const std::vector<Matrix>& keys) {
    const std::size_t H = keys.size();
    std::vector<Matrix> grad;
    if (H == 0) return grad;
    const double dk = static_cast<double>(keys.front().cols());
    for (std::size_t a = 0; a < H; ++a) {
        Matrix g(keys[a].rows(), keys[a].cols());
        for (std::size_t b = 0; b < H; ++b) {
            if (b == a) continue;
            const Matrix gram = (1.0 / dk) * matmul_tn(keys[a], keys[b]); // G_ab
            g = g + (2.0 / dk) * matmul(keys[b], transpose(gram));
        }
        grad.push_back(std::move(g));
    }
    return grad;
}

namespace {

Matrix unit_frobenius(Matrix m) {
    const double n = frobenius_norm(m);
    if (n == 0.0) throw NumericalFailure("zero projection matrix cannot be normalized", 0.0);
    return (1.0 / n) * m;
}

} // namespace

OptimizeResult optimize_projections_from(std::vector<Matrix> start, std::size_t steps,
                                         double step_size) {
    if (start.empty()) throw InvalidArgument("optimizer needs at least one head");
    if (!(step_size > 0.0)) throw InvalidArgument("step_size must be positive");
    const std::size_t p = start.front().rows();
    const std::size_t dk = start.front().cols();
    if (start.size() * dk > p) {
        throw Infeasible("infeasible: H * d_k = " + std::to_string(start.size() * dk) +
                         " exceeds p = " + std::to_string(p));
    }
    for (auto& w : start) {
        if (w.rows() != p || w.cols() != dk) throw ShapeError("heads differ in shape");
        w = unit_frobenius(std::move(w));
    }

    constexpr double kConverged = 1e-16;
    constexpr int kMaxBackoffs = 10;
    std::vector<Matrix> current = std::move(start);
    double objective = gram_objective(current);
    std::vector<double> trace{objective};
    double eta = step_size;
    int backoffs = 0;
    std::size_t it = 0;
    for (; it < steps && objective > kConverged; ++it) {
        std::vector<Matrix> grad = gram_objective_gradient(current);
        // Tangent projection onto each sphere |W|_F = 1.
        double gnorm = 0.0;
        for (std::size_t h = 0; h < current.size(); ++h) {
            const double radial = dot(grad[h].data(), current[h].data());
            grad[h] = grad[h] - radial * current[h];
            gnorm += frobenius_sq(grad[h]);
        }
        if (gnorm == 0.0) break;

        std::vector<Matrix> trial;
        trial.reserve(current.size());
        for (std::size_t h = 0; h < current.size(); ++h)
            trial.push_back(unit_frobenius(current[h] - eta * grad[h]));
        const double candidate = gram_objective(trial);
        if (candidate <= objective) {
            current = std::move(trial);
            objective = candidate;
            trace.push_back(objective);
            backoffs = 0;
            eta *= 1.2;
        } else {
            eta *= 0.5;
            if (++backoffs >= kMaxBackoffs) {
                throw OptimizationStalled("objective increased for " +
                                              std::to_string(kMaxBackoffs) +
                                              " consecutive backoffs",
                                          trace);
            }
        }
    }
    return {ProjectionSet(projection_set_from_keys(current).heads(), true), std::move(trace), it};
}

OptimizeResult optimize_projections(std::size_t p, std::size_t d_k, std::size_t H,
                                    std::uint64_t seed, std::size_t steps, double step_size) {
    if (H * d_k > p) {
        throw Infeasible("infeasible: H * d_k = " + std::to_string(H * d_k) +
                         " exceeds p = " + std::to_string(p));
    }
    Rng rng(derive_seed(seed, "optimizer-start"));
    std::vector<Matrix> start;
    for (std::size_t h = 0; h < H; ++h) start.push_back(random_gaussian(p, d_k, rng));
    return optimize_projections_from(std::move(start), steps, step_size);
}

std::vector<Matrix> parse_weight_document(const std::string& text) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw WeightFileError(std::string("weight file parse error at byte ") +
                                  std::to_string(e.byte) + ": " + e.what(),
                              e.byte);
    } catch (const json::exception& e) {
        throw WeightFileError(std::string("weight file is not valid JSON: ") + e.what(), 0);
    }
    if (!doc.is_object()) throw WeightFileError("weight file must be a JSON object", 0);
    if (!doc.contains("version") || !doc["version"].is_number_integer() || doc["version"] != 1) {
        throw WeightFileError("weight file needs \"version\": 1", 0);
    }
    if (!doc.contains("heads") || !doc["heads"].is_array() || doc["heads"].empty()) {
        throw WeightFileError("weight file needs a nonempty \"heads\" array", 0);
    }
    std::vector<Matrix> keys;
    std::size_t p0 = 0, d0 = 0;
    long index = 0;
    for (const auto& head : doc["heads"]) {
        const std::string where = "head " + std::to_string(index);
        if (!head.is_object() || !head.contains("p") || !head.contains("d_k") ||
            !head.contains("data")) {
            throw WeightFileError(where + ": needs fields p, d_k, data", 0, index);
        }
        if (!head["p"].is_number_unsigned() || !head["d_k"].is_number_unsigned()) {
            throw WeightFileError(where + ": p and d_k must be positive integers", 0, index);
        }
        const auto p = head["p"].get<std::size_t>();
        const auto dk = head["d_k"].get<std::size_t>();
        const auto& data = head["data"];
        if (p == 0 || dk == 0 || dk > p) {
            throw WeightFileError(where + ": invalid shape " + std::to_string(p) + "x" +
                                      std::to_string(dk),
                                  0, index);
        }
        if (!data.is_array() || data.size() != p * dk) {
            throw WeightFileError(where + ": data holds " +
                                      std::to_string(data.is_array() ? data.size() : 0) +
                                      " numbers, declared shape " + std::to_string(p) + "x" +
                                      std::to_string(dk) + " needs " + std::to_string(p * dk),
                                  0, index);
        }
        if (index == 0) {
            p0 = p;
            d0 = dk;
        } else if (p != p0 || dk != d0) {
            throw WeightFileError(where + ": shape " + std::to_string(p) + "x" +
                                      std::to_string(dk) + " differs from head 0 (" +
                                      std::to_string(p0) + "x" + std::to_string(d0) + ")",
                                  0, index);
        }
        std::vector<double> values;
        values.reserve(p * dk);
        for (const auto& v : data) {
            if (!v.is_number() || !std::isfinite(v.get<double>())) {
                throw WeightFileError(where + ": entries must be finite numbers", 0, index);
            }
            values.push_back(v.get<double>());
        }
        keys.emplace_back(p, dk, std::move(values));
        ++index;
    }
    return keys;
}

std::vector<Matrix> read_weight_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WeightFileError("cannot open weight file '" + path + "'", 0);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_weight_document(buf.str());
}

std::string write_weight_document(const std::vector<Matrix>& keys) {
    nlohmann::json doc;
    doc["version"] = 1;
    doc["heads"] = nlohmann::json::array();
    for (const auto& k : keys) {
        doc["heads"].push_back({{"p", k.rows()}, {"d_k", k.cols()}, {"data", k.data()}});
    }
    return doc.dump(2) + "\n";
}

} // namespace mhalab
