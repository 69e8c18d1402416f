#include "ibnet/embeddings.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "ibnet/errors.hpp"
#include "ibnet/rng.hpp"

namespace ibnet {

namespace {

// ---------------------------------------------------------------------------
// shared helpers

void check_graph_set(const std::vector<BipartiteInterbrainGraph>& graphs,
                     std::size_t min_count) {
    if (graphs.size() < min_count)
        throw validation_error("encoder needs at least " + std::to_string(min_count) +
                               " graphs");
    for (const auto& g : graphs) {
        if (g.n1 <= 0 || g.n2 <= 0) throw validation_error("graph has empty node sets");
        if (g.n1 != graphs[0].n1 || g.n2 != graphs[0].n2)
            throw validation_error("graphs have inconsistent node counts");
    }
}

void check_transform_inputs(const EncoderState& state,
                            const std::vector<BipartiteInterbrainGraph>& graphs) {
    if (!state.fitted) throw validation_error("encoder state is unfitted");
    for (const auto& g : graphs)
        if (g.n1 != state.n1 || g.n2 != state.n2)
            throw validation_error("graph node counts do not match the fitted encoder");
}

int default_delta(EncoderKind kind, int requested) {
    if (requested > 0) return requested;
    switch (kind) {
        case EncoderKind::NMF_IBNE: return 8;
        case EncoderKind::GRAPH2VEC:
        case EncoderKind::GL2VEC: return 64;
        default: return 0;  // structurally determined
    }
}

Eigen::MatrixXd dense_weights(const BipartiteInterbrainGraph& g) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(g.n1, g.n2);
    for (const auto& e : g.edges) w(e.u, e.v) = e.w;
    return w;
}

/// Population moments (mean, sd, third central moment) of a vector.
std::array<double, 3> pooled_moments(const Eigen::VectorXd& v) {
    const auto n = static_cast<double>(v.size());
    const double mean = v.mean();
    const Eigen::ArrayXd c = v.array() - mean;
    const double var = c.square().sum() / n;
    const double m3 = c.cube().sum() / n;
    return {mean, std::sqrt(var), m3};
}

std::uint64_t hash_doubles(const double* data, std::size_t count, std::uint64_t h) {
    return fnv1a64(reinterpret_cast<const unsigned char*>(data), count * sizeof(double), h);
}

// ---------------------------------------------------------------------------
// FC

void fill_fc(const std::vector<BipartiteInterbrainGraph>& graphs, EmbeddingMatrix& out) {
    const int n1 = graphs[0].n1, n2 = graphs[0].n2;
    out.delta = n1 * n2;
    out.rows.resize(static_cast<Eigen::Index>(graphs.size()), out.delta);
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        const Eigen::MatrixXd w = dense_weights(graphs[i]);
        for (int r = 0; r < n1; ++r)
            for (int c = 0; c < n2; ++c)
                out.rows(static_cast<Eigen::Index>(i), r * n2 + c) = w(r, c);
    }
}

// ---------------------------------------------------------------------------
// NMF-IBNE

Eigen::MatrixXd density_matrix(const std::vector<BipartiteInterbrainGraph>& graphs) {
    const int p = graphs[0].n1 + graphs[0].n2;
    Eigen::MatrixXd d(static_cast<Eigen::Index>(graphs.size()), p);
    for (std::size_t i = 0; i < graphs.size(); ++i)
        d.row(static_cast<Eigen::Index>(i)) = nodal_density(graphs[i]).transpose();
    return d;
}

/// Multiplicative-update NMF of D (n x p) into Z (n x delta) W (delta x p).
/// The init is keyed by column content so that consistently relabeled inputs
/// yield an identically relabeled factorization.
void nmf_fit(const Eigen::MatrixXd& d, int delta, std::uint64_t seed, Eigen::MatrixXd& w,
             Eigen::MatrixXd& z, std::vector<double>& trace) {
    const auto n = d.rows();
    const auto p = d.cols();
    const double scale = std::sqrt(std::max(d.mean(), 1e-12) / static_cast<double>(delta));

    z.resize(n, delta);
    {
        Rng rng(mix_seed(seed, 12));
        for (Eigen::Index i = 0; i < n; ++i)
            for (int k = 0; k < delta; ++k) z(i, k) = rng.uniform() * scale;
    }
    w.resize(delta, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        std::vector<double> col(d.col(j).data(), d.col(j).data() + n);
        Rng rng(mix_seed(seed, 11, hash_doubles(col.data(), col.size(), 0xcbf29ce484222325ULL)));
        for (int k = 0; k < delta; ++k) w(k, j) = rng.uniform() * scale;
    }

    constexpr double eps = 1e-12;
    trace.clear();
    double prev = (d - z * w).squaredNorm();
    trace.push_back(prev);
    for (int iter = 0; iter < 500; ++iter) {
        // W <- W .* (Z^T D) ./ (Z^T Z W)
        const Eigen::MatrixXd zt_d = z.transpose() * d;
        const Eigen::MatrixXd zt_z_w = z.transpose() * z * w;
        w = w.cwiseProduct(zt_d.cwiseQuotient(zt_z_w.cwiseMax(eps)));
        // Z <- Z .* (D W^T) ./ (Z W W^T)
        const Eigen::MatrixXd d_wt = d * w.transpose();
        const Eigen::MatrixXd z_w_wt = z * (w * w.transpose());
        z = z.cwiseProduct(d_wt.cwiseQuotient(z_w_wt.cwiseMax(eps)));

        const double obj = (d - z * w).squaredNorm();
        trace.push_back(obj);
        if (prev - obj < 1e-6 * std::max(prev, eps)) break;
        prev = obj;
    }
}

/// Nonnegative least squares min_z |d - z W|^2, z >= 0, by projected gradient
/// with the 1/L step, L = 2 lambda_max(W W^T).
Eigen::VectorXd nnls_row(const Eigen::VectorXd& d, const Eigen::MatrixXd& w,
                         double inv_l) {
    const auto delta = w.rows();
    Eigen::VectorXd z = Eigen::VectorXd::Zero(delta);
    double prev = d.squaredNorm();
    for (int iter = 0; iter < 1000; ++iter) {
        const Eigen::VectorXd resid = w.transpose() * z - d;
        const Eigen::VectorXd grad = 2.0 * (w * resid);
        z = (z - inv_l * grad).cwiseMax(0.0);
        const double obj = (w.transpose() * z - d).squaredNorm();
        if (prev - obj < 1e-6 * std::max(prev, 1e-12)) break;
        prev = obj;
    }
    return z;
}

void fit_nmf(const std::vector<BipartiteInterbrainGraph>& graphs, EncoderState& state) {
    const int delta = state.params.delta;
    const auto n = static_cast<int>(graphs.size());
    const int p = state.n1 + state.n2;
    if (delta < 1 || delta > std::min(n, p))
        throw validation_error("NMF delta must be in [1, min(graph count, node count)]");
    const Eigen::MatrixXd d = density_matrix(graphs);
    nmf_fit(d, delta, state.seed, state.nmf_basis, state.nmf_train_rows, state.nmf_trace);
}

void fill_nmf(const EncoderState& state, const std::vector<BipartiteInterbrainGraph>& graphs,
              EmbeddingMatrix& out) {
    const Eigen::MatrixXd& w = state.nmf_basis;
    out.delta = static_cast<int>(w.rows());
    out.rows.resize(static_cast<Eigen::Index>(graphs.size()), out.delta);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(w * w.transpose());
    const double l = 2.0 * std::max(eig.eigenvalues().maxCoeff(), 1e-12);
    for (std::size_t i = 0; i < graphs.size(); ++i)
        out.rows.row(static_cast<Eigen::Index>(i)) =
            nnls_row(nodal_density(graphs[i]), w, 1.0 / l).transpose();
}

// ---------------------------------------------------------------------------
// LDP

/// Per-node tuple (degree, min, max, mean, std of neighbor degrees) on the
/// unweighted graph; isolated nodes contribute all-zero neighbor statistics.
Eigen::MatrixXd ldp_node_features(const BipartiteInterbrainGraph& g) {
    const int n = g.n1 + g.n2;
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (const auto& e : g.edges) {
        adj[static_cast<std::size_t>(e.u)].push_back(g.n1 + e.v);
        adj[static_cast<std::size_t>(g.n1 + e.v)].push_back(e.u);
    }
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n, 5);
    for (int v = 0; v < n; ++v) {
        const auto& nb = adj[static_cast<std::size_t>(v)];
        f(v, 0) = static_cast<double>(nb.size());
        if (nb.empty()) continue;
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0, sum = 0.0;
        for (int u : nb) {
            const auto deg = static_cast<double>(adj[static_cast<std::size_t>(u)].size());
            lo = std::min(lo, deg);
            hi = std::max(hi, deg);
            sum += deg;
        }
        const double mean = sum / static_cast<double>(nb.size());
        double var = 0.0;
        for (int u : nb) {
            const auto deg = static_cast<double>(adj[static_cast<std::size_t>(u)].size());
            var += (deg - mean) * (deg - mean);
        }
        var /= static_cast<double>(nb.size());
        f(v, 1) = lo;
        f(v, 2) = hi;
        f(v, 3) = mean;
        f(v, 4) = std::sqrt(var);
    }
    return f;
}

void fit_ldp(const std::vector<BipartiteInterbrainGraph>& graphs, EncoderState& state) {
    if (state.params.ldp_bins < 1) throw validation_error("LDP bin count must be >= 1");
    state.ldp_ranges.resize(5, 2);
    state.ldp_ranges.col(0).setConstant(std::numeric_limits<double>::infinity());
    state.ldp_ranges.col(1).setConstant(-std::numeric_limits<double>::infinity());
    for (const auto& g : graphs) {
        const Eigen::MatrixXd f = ldp_node_features(g);
        for (int k = 0; k < 5; ++k) {
            state.ldp_ranges(k, 0) = std::min(state.ldp_ranges(k, 0), f.col(k).minCoeff());
            state.ldp_ranges(k, 1) = std::max(state.ldp_ranges(k, 1), f.col(k).maxCoeff());
        }
    }
}

void fill_ldp(const EncoderState& state, const std::vector<BipartiteInterbrainGraph>& graphs,
              EmbeddingMatrix& out) {
    const int bins = state.params.ldp_bins;
    out.delta = 5 * bins;
    out.rows = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(graphs.size()), out.delta);
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        const Eigen::MatrixXd f = ldp_node_features(graphs[i]);
        const auto n = static_cast<double>(f.rows());
        for (int k = 0; k < 5; ++k) {
            const double lo = state.ldp_ranges(k, 0), hi = state.ldp_ranges(k, 1);
            for (Eigen::Index v = 0; v < f.rows(); ++v) {
                int b = 0;
                if (hi > lo) {
                    // Out-of-range test values clip to the edge bins.
                    const double u = (f(v, k) - lo) / (hi - lo);
                    b = std::clamp(static_cast<int>(std::floor(u * bins)), 0, bins - 1);
                }
                out.rows(static_cast<Eigen::Index>(i), k * bins + b) += 1.0 / n;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Graph2Vec / GL2Vec

/// WL subtree token document of a graph: all tokens of depths 0..H, sorted so
/// the document is a canonical multiset independent of node order.
std::vector<std::uint64_t> wl_document(const GenericGraph& g, int depth, WLInit init) {
    const auto tokens = wl_relabel(g, depth, init);
    std::vector<std::uint64_t> doc;
    doc.reserve(tokens.size() * static_cast<std::size_t>(g.n));
    for (const auto& level : tokens)
        for (std::uint64_t t : level) doc.push_back(t);
    std::sort(doc.begin(), doc.end());
    return doc;
}

std::vector<std::uint64_t> graph_document(EncoderKind kind, const BipartiteInterbrainGraph& g,
                                          int depth) {
    if (kind == EncoderKind::GL2VEC) {
        if (g.edges.empty()) return {};  // degenerate: no line graph exists
        return wl_document(line_graph(g), depth, WLInit::PROVIDED);
    }
    return wl_document(to_generic(g), depth, WLInit::DEGREE_BUCKET);
}

double sigmoid(double x) {
    return x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Sampler over the unigram^0.75 token distribution via the inverse CDF.
struct NegativeSampler {
    std::vector<double> cdf;

    explicit NegativeSampler(const std::vector<std::uint64_t>& counts) {
        cdf.resize(counts.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            acc += std::pow(static_cast<double>(counts[i]), 0.75);
            cdf[i] = acc;
        }
        for (double& c : cdf) c /= acc;
    }

    std::size_t draw(Rng& rng) const {
        const double u = rng.uniform();
        return static_cast<std::size_t>(
            std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    }
};

constexpr int kSgEpochs = 100;
constexpr double kSgLr = 0.025;
constexpr int kSgNegatives = 5;

void fit_graph2vec(EncoderKind kind, const std::vector<BipartiteInterbrainGraph>& graphs,
                   EncoderState& state) {
    const int delta = state.params.delta;
    const int depth = state.params.wl_depth;
    if (delta < 1) throw validation_error("embedding size must be >= 1");
    if (depth < 1) throw validation_error("WL depth must be >= 1");

    std::vector<std::vector<std::uint64_t>> docs;
    docs.reserve(graphs.size());
    for (const auto& g : graphs) docs.push_back(graph_document(kind, g, depth));

    std::map<std::uint64_t, std::uint64_t> counts;
    for (const auto& doc : docs)
        for (std::uint64_t t : doc) ++counts[t];
    state.vocab.clear();
    state.vocab_counts.clear();
    for (const auto& [token, count] : counts) {
        state.vocab.push_back(token);
        state.vocab_counts.push_back(count);
    }
    if (state.vocab.empty()) throw validation_error("all training documents are empty");

    std::map<std::uint64_t, std::size_t> token_index;
    for (std::size_t i = 0; i < state.vocab.size(); ++i) token_index[state.vocab[i]] = i;

    // Distributed bag-of-tokens with negative sampling. Document vectors are
    // discarded after training; only token vectors are part of the state.
    const double span = 1.0 / static_cast<double>(delta);
    Eigen::MatrixXd docvec(static_cast<Eigen::Index>(docs.size()), delta);
    state.token_vectors.resize(static_cast<Eigen::Index>(state.vocab.size()), delta);
    {
        Rng rng(mix_seed(state.seed, 13));
        for (Eigen::Index i = 0; i < docvec.rows(); ++i)
            for (int k = 0; k < delta; ++k) docvec(i, k) = rng.uniform(-0.5 * span, 0.5 * span);
        for (Eigen::Index i = 0; i < state.token_vectors.rows(); ++i)
            for (int k = 0; k < delta; ++k)
                state.token_vectors(i, k) = rng.uniform(-0.5 * span, 0.5 * span);
    }

    const NegativeSampler sampler(state.vocab_counts);
    Rng rng(mix_seed(state.seed, 14));
    for (int epoch = 0; epoch < kSgEpochs; ++epoch) {
        const double lr = kSgLr * (1.0 - static_cast<double>(epoch) / kSgEpochs);
        for (std::size_t d = 0; d < docs.size(); ++d) {
            auto z = docvec.row(static_cast<Eigen::Index>(d));
            for (std::uint64_t token : docs[d]) {
                const auto ti = static_cast<Eigen::Index>(token_index.at(token));
                for (int s = 0; s <= kSgNegatives; ++s) {
                    const Eigen::Index wi =
                        s == 0 ? ti : static_cast<Eigen::Index>(sampler.draw(rng));
                    const double target = s == 0 ? 1.0 : 0.0;
                    auto w = state.token_vectors.row(wi);
                    const double g = lr * (target - sigmoid(z.dot(w)));
                    const Eigen::RowVectorXd w_old = w;
                    w += g * z;
                    z += g * w_old;
                }
            }
        }
    }
}

void fill_graph2vec(const EncoderState& state,
                    const std::vector<BipartiteInterbrainGraph>& graphs,
                    EmbeddingMatrix& out) {
    const int delta = state.params.delta;
    out.delta = delta;
    out.rows = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(graphs.size()), delta);

    std::map<std::uint64_t, std::size_t> token_index;
    for (std::size_t i = 0; i < state.vocab.size(); ++i) token_index[state.vocab[i]] = i;
    const NegativeSampler sampler(state.vocab_counts);

    for (std::size_t i = 0; i < graphs.size(); ++i) {
        std::vector<Eigen::Index> doc;
        for (std::uint64_t t : graph_document(state.kind, graphs[i], state.params.wl_depth)) {
            const auto it = token_index.find(t);
            if (it != token_index.end())
                doc.push_back(static_cast<Eigen::Index>(it->second));
            // out-of-vocabulary tokens are skipped (inductive inference)
        }
        if (doc.empty()) {
            out.degenerate_rows.push_back(i);
            continue;
        }
        // Frozen token vectors; the document vector is refit from zero init.
        // The sampler stream is keyed by document content so inference is a
        // pure function of (state, graph).
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (Eigen::Index ti : doc) {
            const auto u = static_cast<std::uint64_t>(ti);
            h = fnv1a64(reinterpret_cast<const unsigned char*>(&u), sizeof u, h);
        }
        Rng rng(mix_seed(state.seed, 15, h));
        Eigen::RowVectorXd z = Eigen::RowVectorXd::Zero(delta);
        for (int step = 0; step < kSgEpochs; ++step) {
            const double lr = kSgLr * (1.0 - static_cast<double>(step) / kSgEpochs);
            for (Eigen::Index ti : doc) {
                for (int s = 0; s <= kSgNegatives; ++s) {
                    const Eigen::Index wi =
                        s == 0 ? ti : static_cast<Eigen::Index>(sampler.draw(rng));
                    const double target = s == 0 ? 1.0 : 0.0;
                    const auto w = state.token_vectors.row(wi);
                    z += lr * (target - sigmoid(z.dot(w))) * w;
                }
            }
        }
        out.rows.row(static_cast<Eigen::Index>(i)) = z;
    }
}

// ---------------------------------------------------------------------------
// DWC

void fill_dwc(const EncoderState& state, const std::vector<BipartiteInterbrainGraph>& graphs,
              EmbeddingMatrix& out) {
    const auto& scales = state.params.dwc_scales;
    out.delta = 3 * static_cast<int>(scales.size());
    out.rows.resize(static_cast<Eigen::Index>(graphs.size()), out.delta);
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        const auto ops = diffusion_operators(graphs[i]);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ops.laplacian);
        const Eigen::MatrixXd& u = eig.eigenvectors();
        const Eigen::VectorXd& lam = eig.eigenvalues();
        for (std::size_t s = 0; s < scales.size(); ++s) {
            const Eigen::VectorXd damp = (-scales[s] * lam.array()).exp().matrix();
            const Eigen::MatrixXd psi = u * damp.asDiagonal() * u.transpose();
            const Eigen::VectorXd energy = psi.array().square().rowwise().sum().matrix();
            const auto m = pooled_moments(energy);
            for (int k = 0; k < 3; ++k)
                out.rows(static_cast<Eigen::Index>(i), static_cast<int>(s) * 3 + k) = m[k];
        }
    }
}

// ---------------------------------------------------------------------------
// Scattering

Eigen::VectorXd unweighted_degree(const BipartiteInterbrainGraph& g) {
    Eigen::VectorXd deg = Eigen::VectorXd::Zero(g.n1 + g.n2);
    for (const auto& e : g.edges) {
        deg(e.u) += 1.0;
        deg(g.n1 + e.v) += 1.0;
    }
    return deg;
}

Eigen::VectorXd incident_weight_sum(const BipartiteInterbrainGraph& g) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(g.n1 + g.n2);
    for (const auto& e : g.edges) {
        s(e.u) += e.w;
        s(g.n1 + e.v) += e.w;
    }
    return s;
}

void append_q_moments(const Eigen::VectorXd& x, int moments, std::vector<double>& out) {
    const auto n = static_cast<double>(x.size());
    for (int q = 1; q <= moments; ++q) out.push_back(x.array().pow(q).sum() / n);
}

void fill_scattering(const EncoderState& state,
                     const std::vector<BipartiteInterbrainGraph>& graphs,
                     EmbeddingMatrix& out) {
    const int levels = state.params.scattering_levels;
    const int moments = state.params.scattering_moments;
    const int per_signal = moments * (1 + levels + levels * (levels - 1) / 2);
    out.delta = 2 * per_signal;
    out.rows.resize(static_cast<Eigen::Index>(graphs.size()), out.delta);
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        const auto ops = diffusion_operators(graphs[i]);
        // Dyadic powers P^(2^0) .. P^(2^levels) of the lazy walk operator.
        std::vector<Eigen::MatrixXd> pow2(static_cast<std::size_t>(levels) + 1);
        pow2[0] = ops.lazy_walk;
        for (int j = 1; j <= levels; ++j) pow2[static_cast<std::size_t>(j)] =
            pow2[static_cast<std::size_t>(j - 1)] * pow2[static_cast<std::size_t>(j - 1)];
        // Psi_j = P^(2^(j-1)) - P^(2^j), j = 1..levels.
        std::vector<Eigen::MatrixXd> psi;
        for (int j = 1; j <= levels; ++j)
            psi.push_back(pow2[static_cast<std::size_t>(j - 1)] -
                          pow2[static_cast<std::size_t>(j)]);

        std::vector<double> feat;
        feat.reserve(static_cast<std::size_t>(out.delta));
        for (const Eigen::VectorXd& x :
             {unweighted_degree(graphs[i]), incident_weight_sum(graphs[i])}) {
            append_q_moments(x, moments, feat);
            std::vector<Eigen::VectorXd> first;
            for (const auto& p : psi) first.push_back((p * x).cwiseAbs());
            for (const auto& f : first) append_q_moments(f, moments, feat);
            for (std::size_t j = 0; j < first.size(); ++j)
                for (std::size_t j2 = j + 1; j2 < first.size(); ++j2)
                    append_q_moments((psi[j2] * first[j]).cwiseAbs(), moments, feat);
        }
        for (int k = 0; k < out.delta; ++k)
            out.rows(static_cast<Eigen::Index>(i), k) = feat[static_cast<std::size_t>(k)];
    }
}

// ---------------------------------------------------------------------------
// Feather

Eigen::MatrixXd row_normalized_adjacency(const BipartiteInterbrainGraph& g) {
    const auto ops = diffusion_operators(g);
    const int n = g.n1 + g.n2;
    Eigen::MatrixXd a = ops.adjacency;
    for (int v = 0; v < n; ++v) {
        const double d = ops.degree(v, v);
        if (d > 0.0) a.row(v) /= d;
        else a.row(v).setZero();
    }
    return a;
}

void fill_feather(const EncoderState& state,
                  const std::vector<BipartiteInterbrainGraph>& graphs,
                  EmbeddingMatrix& out) {
    const int order = state.params.feather_order;
    const int points = state.params.feather_points;
    out.delta = 2 * 2 * order * points;
    out.rows.resize(static_cast<Eigen::Index>(graphs.size()), out.delta);
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        const Eigen::MatrixXd a = row_normalized_adjacency(graphs[i]);
        std::vector<Eigen::MatrixXd> powers(static_cast<std::size_t>(order));
        powers[0] = a;
        for (int r = 1; r < order; ++r) powers[static_cast<std::size_t>(r)] =
            powers[static_cast<std::size_t>(r - 1)] * a;

        int col = 0;
        for (const Eigen::VectorXd& x :
             {unweighted_degree(graphs[i]), nodal_density(graphs[i])}) {
            for (int r = 0; r < order; ++r) {
                for (int k = 1; k <= points; ++k) {
                    const double theta = 0.2 * k;
                    const Eigen::VectorXd re = (theta * x.array()).cos().matrix();
                    const Eigen::VectorXd im = (theta * x.array()).sin().matrix();
                    out.rows(static_cast<Eigen::Index>(i), col++) =
                        (powers[static_cast<std::size_t>(r)] * re).mean();
                    out.rows(static_cast<Eigen::Index>(i), col++) =
                        (powers[static_cast<std::size_t>(r)] * im).mean();
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// base64 codec for fitted arrays (little-endian doubles)

const char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* data, std::size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        std::uint32_t v = static_cast<std::uint32_t>(data[i]) << 16;
        if (i + 1 < len) v |= static_cast<std::uint32_t>(data[i + 1]) << 8;
        if (i + 2 < len) v |= static_cast<std::uint32_t>(data[i + 2]);
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(i + 1 < len ? kB64Alphabet[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < len ? kB64Alphabet[v & 63] : '=');
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& s) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (s.size() % 4 != 0) throw validation_error("base64 payload length must be a multiple of 4");
    std::vector<unsigned char> out;
    out.reserve(s.size() / 4 * 3);
    for (std::size_t i = 0; i < s.size(); i += 4) {
        int vals[4] = {0, 0, 0, 0};
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = s[i + static_cast<std::size_t>(k)];
            if (c == '=') {
                ++pad;
                continue;
            }
            vals[k] = value_of(c);
            if (vals[k] < 0 || pad > 0) throw validation_error("invalid base64 payload");
        }
        const std::uint32_t v = (static_cast<std::uint32_t>(vals[0]) << 18) |
                                (static_cast<std::uint32_t>(vals[1]) << 12) |
                                (static_cast<std::uint32_t>(vals[2]) << 6) |
                                static_cast<std::uint32_t>(vals[3]);
        out.push_back(static_cast<unsigned char>((v >> 16) & 255));
        if (pad < 2) out.push_back(static_cast<unsigned char>((v >> 8) & 255));
        if (pad < 1) out.push_back(static_cast<unsigned char>(v & 255));
    }
    return out;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    // Row-major little-endian doubles. The build targets little-endian hosts.
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
    nlohmann::json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    j["data"] = base64_encode(reinterpret_cast<const unsigned char*>(flat.data()),
                              flat.size() * sizeof(double));
    return j;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto bytes = base64_decode(j.at("data").get<std::string>());
    if (bytes.size() != static_cast<std::size_t>(rows * cols) * sizeof(double))
        throw validation_error("matrix payload size does not match its dimensions");
    Eigen::MatrixXd m(rows, cols);
    std::size_t off = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            double v = 0.0;
            std::memcpy(&v, bytes.data() + off, sizeof v);
            m(r, c) = v;
            off += sizeof v;
        }
    return m;
}

}  // namespace

std::string encoder_name(EncoderKind kind) {
    switch (kind) {
        case EncoderKind::FC: return "fc";
        case EncoderKind::NMF_IBNE: return "nmf_ibne";
        case EncoderKind::LDP: return "ldp";
        case EncoderKind::GRAPH2VEC: return "graph2vec";
        case EncoderKind::GL2VEC: return "gl2vec";
        case EncoderKind::DWC: return "dwc";
        case EncoderKind::SCATTERING: return "scattering";
        case EncoderKind::FEATHER: return "feather";
    }
    throw validation_error("unknown encoder kind");
}

EncoderKind encoder_from_name(const std::string& name) {
    static const std::map<std::string, EncoderKind> kinds = {
        {"fc", EncoderKind::FC},           {"nmf_ibne", EncoderKind::NMF_IBNE},
        {"ldp", EncoderKind::LDP},         {"graph2vec", EncoderKind::GRAPH2VEC},
        {"gl2vec", EncoderKind::GL2VEC},   {"dwc", EncoderKind::DWC},
        {"scattering", EncoderKind::SCATTERING}, {"feather", EncoderKind::FEATHER}};
    const auto it = kinds.find(name);
    if (it == kinds.end()) throw validation_error("unknown encoder: " + name);
    return it->second;
}

EncoderState fit_encoder(EncoderKind kind, const std::vector<BipartiteInterbrainGraph>& graphs,
                         const EncoderParams& params, std::uint64_t seed) {
    check_graph_set(graphs, 2);
    EncoderState state;
    state.kind = kind;
    state.params = params;
    state.params.delta = default_delta(kind, params.delta);
    state.n1 = graphs[0].n1;
    state.n2 = graphs[0].n2;
    state.seed = seed;
    switch (kind) {
        case EncoderKind::FC: break;  // vectorization needs no fitting
        case EncoderKind::NMF_IBNE: fit_nmf(graphs, state); break;
        case EncoderKind::LDP: fit_ldp(graphs, state); break;
        case EncoderKind::GRAPH2VEC:
        case EncoderKind::GL2VEC: fit_graph2vec(kind, graphs, state); break;
        case EncoderKind::DWC:
            if (state.params.dwc_scales.empty())
                throw validation_error("DWC needs at least one scale");
            break;
        case EncoderKind::SCATTERING:
            if (state.params.scattering_levels < 1 || state.params.scattering_moments < 1)
                throw validation_error("scattering levels and moments must be >= 1");
            break;
        case EncoderKind::FEATHER:
            if (state.params.feather_order < 1 || state.params.feather_points < 1)
                throw validation_error("feather order and point count must be >= 1");
            break;
    }
    state.fitted = true;
    return state;
}

EmbeddingMatrix transform(const EncoderState& state,
                          const std::vector<BipartiteInterbrainGraph>& graphs) {
    check_transform_inputs(state, graphs);
    EmbeddingMatrix out;
    out.row_keys.reserve(graphs.size());
    for (const auto& g : graphs) out.row_keys.push_back(g.meta);
    switch (state.kind) {
        case EncoderKind::FC: fill_fc(graphs, out); break;
        case EncoderKind::NMF_IBNE: fill_nmf(state, graphs, out); break;
        case EncoderKind::LDP: fill_ldp(state, graphs, out); break;
        case EncoderKind::GRAPH2VEC:
        case EncoderKind::GL2VEC: fill_graph2vec(state, graphs, out); break;
        case EncoderKind::DWC: fill_dwc(state, graphs, out); break;
        case EncoderKind::SCATTERING: fill_scattering(state, graphs, out); break;
        case EncoderKind::FEATHER: fill_feather(state, graphs, out); break;
    }
    if (!out.rows.allFinite())
        throw validation_error("encoder produced non-finite embeddings");
    return out;
}

EmbeddingMatrix encode_fc(const std::vector<BipartiteInterbrainGraph>& graphs) {
    check_graph_set(graphs, 1);
    EmbeddingMatrix out;
    for (const auto& g : graphs) out.row_keys.push_back(g.meta);
    fill_fc(graphs, out);
    return out;
}

std::pair<double, double> feather_characteristic(const Eigen::MatrixXd& adj_norm,
                                                 const Eigen::VectorXd& x, int rho,
                                                 double theta) {
    if (adj_norm.rows() != adj_norm.cols() || adj_norm.rows() != x.size())
        throw validation_error("adjacency and signal dimensions do not match");
    if (rho < 1) throw validation_error("power must be >= 1");
    Eigen::MatrixXd p = adj_norm;
    for (int r = 1; r < rho; ++r) p *= adj_norm;
    const Eigen::VectorXd re = (theta * x.array()).cos().matrix();
    const Eigen::VectorXd im = (theta * x.array()).sin().matrix();
    return {(p * re).mean(), (p * im).mean()};
}

nlohmann::json encoder_to_json(const EncoderState& state) {
    nlohmann::json j;
    j["kind"] = encoder_name(state.kind);
    j["n1"] = state.n1;
    j["n2"] = state.n2;
    j["seed"] = state.seed;
    j["fitted"] = state.fitted;
    nlohmann::json p;
    p["delta"] = state.params.delta;
    p["wl_depth"] = state.params.wl_depth;
    p["ldp_bins"] = state.params.ldp_bins;
    p["dwc_scales"] = state.params.dwc_scales;
    p["scattering_levels"] = state.params.scattering_levels;
    p["scattering_moments"] = state.params.scattering_moments;
    p["feather_order"] = state.params.feather_order;
    p["feather_points"] = state.params.feather_points;
    j["params"] = p;
    if (state.nmf_basis.size() > 0) {
        j["nmf_basis"] = matrix_to_json(state.nmf_basis);
        j["nmf_train_rows"] = matrix_to_json(state.nmf_train_rows);
    }
    if (state.ldp_ranges.size() > 0) j["ldp_ranges"] = matrix_to_json(state.ldp_ranges);
    if (!state.vocab.empty()) {
        j["vocab"] = state.vocab;
        j["vocab_counts"] = state.vocab_counts;
        j["token_vectors"] = matrix_to_json(state.token_vectors);
    }
    return j;
}

EncoderState encoder_from_json(const nlohmann::json& j) {
    try {
        EncoderState state;
        state.kind = encoder_from_name(j.at("kind").get<std::string>());
        state.n1 = j.at("n1").get<int>();
        state.n2 = j.at("n2").get<int>();
        state.seed = j.at("seed").get<std::uint64_t>();
        state.fitted = j.at("fitted").get<bool>();
        const auto& p = j.at("params");
        state.params.delta = p.at("delta").get<int>();
        state.params.wl_depth = p.at("wl_depth").get<int>();
        state.params.ldp_bins = p.at("ldp_bins").get<int>();
        state.params.dwc_scales = p.at("dwc_scales").get<std::vector<double>>();
        state.params.scattering_levels = p.at("scattering_levels").get<int>();
        state.params.scattering_moments = p.at("scattering_moments").get<int>();
        state.params.feather_order = p.at("feather_order").get<int>();
        state.params.feather_points = p.at("feather_points").get<int>();
        if (j.contains("nmf_basis")) {
            state.nmf_basis = matrix_from_json(j.at("nmf_basis"));
            state.nmf_train_rows = matrix_from_json(j.at("nmf_train_rows"));
        }
        if (j.contains("ldp_ranges")) state.ldp_ranges = matrix_from_json(j.at("ldp_ranges"));
        if (j.contains("vocab")) {
            state.vocab = j.at("vocab").get<std::vector<std::uint64_t>>();
            state.vocab_counts = j.at("vocab_counts").get<std::vector<std::uint64_t>>();
            state.token_vectors = matrix_from_json(j.at("token_vectors"));
            if (state.vocab.size() != state.vocab_counts.size() ||
                static_cast<std::size_t>(state.token_vectors.rows()) != state.vocab.size())
                throw validation_error("vocabulary arrays have inconsistent sizes");
        }
        return state;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("malformed encoder JSON: ") + e.what());
    }
}

void write_embedding_csv(const EmbeddingMatrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    out << "dyad_id,condition_id,chromophore";
    for (int k = 1; k <= m.delta; ++k) out << ",z" << k;
    out << "\n";
    char buf[32];
    for (Eigen::Index r = 0; r < m.rows.rows(); ++r) {
        const auto& key = m.row_keys[static_cast<std::size_t>(r)];
        out << key.dyad_id << ',' << key.condition_id << ',' << key.chromophore;
        for (Eigen::Index c = 0; c < m.rows.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", m.rows(r, c));
            out << ',' << buf;
        }
        out << "\n";
    }
    if (!out) throw io_error("failed while writing: " + path);
}

EmbeddingMatrix read_embedding_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line)) throw validation_error("empty embedding CSV: " + path);
    std::size_t delta = 0;
    {
        std::stringstream header(line);
        std::string cell;
        std::vector<std::string> cols;
        while (std::getline(header, cell, ',')) cols.push_back(cell);
        if (cols.size() < 4 || cols[0] != "dyad_id" || cols[1] != "condition_id" ||
            cols[2] != "chromophore")
            throw validation_error("unexpected embedding CSV header in " + path);
        delta = cols.size() - 3;
    }
    std::vector<RecordMeta> keys;
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        RecordMeta meta;
        std::getline(ss, meta.dyad_id, ',');
        std::getline(ss, meta.condition_id, ',');
        std::getline(ss, meta.chromophore, ',');
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0' || !std::isfinite(v))
                throw validation_error("bad numeric cell at line " + std::to_string(line_no) +
                                       " in " + path);
            row.push_back(v);
        }
        if (row.size() != delta)
            throw validation_error("row width mismatch at line " + std::to_string(line_no) +
                                   " in " + path);
        keys.push_back(std::move(meta));
        rows.push_back(std::move(row));
    }
    EmbeddingMatrix m;
    m.delta = static_cast<int>(delta);
    m.row_keys = std::move(keys);
    m.rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(delta));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < delta; ++c)
            m.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return m;
}

}  // namespace ibnet
