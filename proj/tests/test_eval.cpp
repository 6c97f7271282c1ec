// Evaluation harness oracles: probe behavior on synthetic blobs, split
// determinism, published drop arithmetic, and retrieval against a
// brute-force full-sort reference.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "rmm/eval.hpp"

using namespace rmm;

namespace {

// Two well-separated gaussian blobs in dim 4.
void make_blobs(std::size_t n_per, double margin, Tensor& x, std::vector<int>& y,
                std::uint64_t seed) {
    RngStream rng(seed, "blobs");
    x = Tensor::zeros({2 * n_per, 4});
    y.clear();
    for (std::size_t i = 0; i < 2 * n_per; ++i) {
        int cls = i < n_per ? 0 : 1;
        y.push_back(cls);
        for (std::size_t c = 0; c < 4; ++c) {
            double center = cls == 0 ? -margin : margin;
            x.at(i, c) = center + 0.1 * rng.gaussian();
        }
    }
}

std::vector<EmbeddedSample> fake_embedded(std::size_t n_classes, std::size_t n_domains,
                                          std::size_t per_cell) {
    std::vector<EmbeddedSample> out;
    for (std::size_t c = 0; c < n_classes; ++c) {
        for (std::size_t d = 0; d < n_domains; ++d) {
            for (std::size_t k = 0; k < per_cell; ++k) {
                EmbeddedSample e;
                e.id = "c" + std::to_string(c) + "_d" + std::to_string(d) + "_" +
                       (k < 10 ? "0" : "") + std::to_string(k);
                e.class_label = static_cast<int>(c);
                e.domain = static_cast<int>(d);
                e.z = Tensor({2}, {double(c), double(d)});
                e.z_v = e.z;
                e.z_l = e.z;
                out.push_back(std::move(e));
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("probe separates high-margin blobs perfectly") {
    Tensor x;
    std::vector<int> y;
    make_blobs(20, 2.0, x, y, 5);
    EvalConfig ecfg;
    Probe p = fit_probe(x, y, 2, ecfg);
    CHECK(probe_accuracy(p, x, y) == doctest::Approx(1.0));

    // agreement with a nearest-centroid oracle on fresh points
    Tensor xt;
    std::vector<int> yt;
    make_blobs(15, 2.0, xt, yt, 6);
    for (std::size_t i = 0; i < xt.rows(); ++i) {
        double s = 0;
        for (std::size_t c = 0; c < 4; ++c) s += xt.at(i, c);
        int centroid_pick = s < 0 ? 0 : 1;
        Tensor row = Tensor::zeros({1, 4});
        for (std::size_t c = 0; c < 4; ++c) row.at(0, c) = xt.at(i, c);
        std::vector<int> one = {yt[i]};
        double acc = probe_accuracy(p, row, one);
        CHECK(acc == (centroid_pick == yt[i] ? 1.0 : 0.0));
    }
}

TEST_CASE("constant features yield a majority-class predictor") {
    Tensor x = Tensor::full({10, 3}, 0.5);
    std::vector<int> y = {0, 0, 0, 0, 0, 0, 0, 1, 1, 1};
    EvalConfig ecfg;
    Probe p = fit_probe(x, y, 2, ecfg);
    // constant features carry no signal; prediction is one fixed class
    Tensor xt = Tensor::full({4, 3}, 0.5);
    std::vector<int> all0 = {0, 0, 0, 0}, all1 = {1, 1, 1, 1};
    double a0 = probe_accuracy(p, xt, all0);
    double a1 = probe_accuracy(p, xt, all1);
    CHECK(a0 + a1 == doctest::Approx(1.0));
    CHECK(a0 == 1.0);  // majority class wins the logit race
}

TEST_CASE("shuffled labels score near chance") {
    RngStream rng(8, "shuffle");
    Tensor x;
    std::vector<int> y;
    make_blobs(40, 2.0, x, y, 9);
    std::vector<int> shuffled = y;
    rng.shuffle(shuffled);
    EvalConfig ecfg;
    Probe p = fit_probe(x, shuffled, 2, ecfg);
    double acc = probe_accuracy(p, x, shuffled);
    // binomial 95% band around 0.5 for n=80 is roughly +-0.11; allow slack
    // for optimism from training-set evaluation
    CHECK(acc < 0.75);
    CHECK(acc > 0.25);
}

TEST_CASE("fit_probe validates labels") {
    Tensor x = Tensor::full({4, 2}, 1.0);
    EvalConfig ecfg;
    CHECK_THROWS_AS(fit_probe(x, {0, 0, 0, 0}, 2, ecfg), ConfigError);  // class 1 absent
    CHECK_THROWS_AS(fit_probe(x, {0, 1, 2, 0}, 2, ecfg), ConfigError);  // label out of range
    CHECK_THROWS_AS(fit_probe(x, {0, 1}, 2, ecfg), ConfigError);        // count mismatch
}

TEST_CASE("probe fitting is deterministic") {
    Tensor x;
    std::vector<int> y;
    make_blobs(25, 1.0, x, y, 12);
    EvalConfig ecfg;
    Probe a = fit_probe(x, y, 2, ecfg);
    Probe b = fit_probe(x, y, 2, ecfg);
    CHECK(bit_equal(a.w, b.w));
    CHECK(bit_equal(a.b, b.b));
    CHECK(bit_equal(a.mu, b.mu));
    CHECK(bit_equal(a.sd, b.sd));
}

TEST_CASE("make_split is deterministic, disjoint, and per-cell proportional") {
    auto embedded = fake_embedded(2, 2, 8);
    ProbeSplit s1 = make_split(embedded, 0.75);
    ProbeSplit s2 = make_split(embedded, 0.75);
    CHECK(s1.train_idx == s2.train_idx);
    CHECK(s1.test_idx == s2.test_idx);
    CHECK(s1.train_idx.size() == 24);  // 6 of 8 per cell
    CHECK(s1.test_idx.size() == 8);
    std::vector<std::size_t> all = s1.train_idx;
    all.insert(all.end(), s1.test_idx.begin(), s1.test_idx.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(embedded.size());
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(all == expect);

    // every (class, domain) cell keeps the same train share
    for (int c = 0; c < 2; ++c) {
        for (int d = 0; d < 2; ++d) {
            std::size_t n = 0;
            for (std::size_t i : s1.train_idx) {
                n += embedded[i].class_label == c && embedded[i].domain == d;
            }
            CHECK(n == 6);
        }
    }
}

TEST_CASE("domain_drop reproduces the published comparison table") {
    // rows: (in-domain %, cross-domain %, drop)
    const double rows[6][3] = {
        {75.0, 68.4, 6.6}, {78.4, 71.3, 7.1}, {79.1, 72.0, 7.1},
        {81.1, 73.8, 7.3}, {83.2, 75.1, 8.1}, {83.3, 78.9, 4.4},
    };
    for (const auto& r : rows) {
        CHECK(std::abs(domain_drop(r[0], r[1]) - r[2]) < 1e-9);
    }
    CHECK(domain_drop(50.0, 50.0) == 0.0);
    CHECK_THROWS_AS(domain_drop(-1.0, 50.0), ConfigError);
    CHECK_THROWS_AS(domain_drop(50.0, 101.0), ConfigError);
}

TEST_CASE("rank_retrieval on a 3x3 hand case") {
    // queries q0=(1,0), q1=(0,1), q2=(1,1)/sqrt2; database equals queries.
    std::vector<Tensor> q = {Tensor({2}, {1.0, 0.0}), Tensor({2}, {0.0, 1.0}),
                             Tensor({2}, {1.0, 1.0})};
    RetrievalMetrics m = rank_retrieval(q, q, {1, 2});
    // each query's best match is itself (cos 1); ranks all 1
    CHECK(m.mean_rank == doctest::Approx(1.0));
    CHECK(m.recall_at.at(1) == doctest::Approx(1.0));
    CHECK(m.recall_at.at(2) == doctest::Approx(1.0));
}

TEST_CASE("rank_retrieval tie-break and zero-vector conventions") {
    // db rows 0 and 1 are identical; query 1 ties them and the lower index
    // wins, pushing the true pair (index 1) to rank 2.
    std::vector<Tensor> db = {Tensor({2}, {1.0, 0.0}), Tensor({2}, {1.0, 0.0}),
                              Tensor({2}, {0.0, 1.0})};
    std::vector<Tensor> qs = {Tensor({2}, {1.0, 0.0}), Tensor({2}, {1.0, 0.0}),
                              Tensor({2}, {0.0, 1.0})};
    RetrievalMetrics m = rank_retrieval(qs, db, {1});
    CHECK(m.recall_at.at(1) == doctest::Approx(2.0 / 3.0));
    CHECK(m.mean_rank == doctest::Approx((1.0 + 2.0 + 1.0) / 3.0));

    // a zero database vector scores -inf and lands at the worst rank
    std::vector<Tensor> db2 = {Tensor({2}, {0.0, 0.0}), Tensor({2}, {0.0, 1.0})};
    std::vector<Tensor> q2 = {Tensor({2}, {1.0, 0.0}), Tensor({2}, {0.0, 1.0})};
    RetrievalMetrics m2 = rank_retrieval(q2, db2, {1});
    CHECK(m2.mean_rank == doctest::Approx((2.0 + 1.0) / 2.0));
}

TEST_CASE("rank_retrieval matches a brute-force full sort on random instances") {
    RngStream rng(13, "retr");
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t n = 2 + rng.uniform_int(0, 62);
        std::size_t dim = 2 + rng.uniform_int(0, 6);
        std::vector<Tensor> qs, db;
        for (std::size_t i = 0; i < n; ++i) {
            Tensor a = Tensor::zeros({dim}), b = Tensor::zeros({dim});
            for (double& v : a.values) v = rng.gaussian();
            for (double& v : b.values) v = rng.gaussian();
            qs.push_back(a);
            db.push_back(b);
        }
        RetrievalMetrics got = rank_retrieval(qs, db, {1, 5});

        // oracle: full sort of cosine similarities, stable on index
        auto cosine = [&](const Tensor& a, const Tensor& b) {
            double dot = 0, na = 0, nb = 0;
            for (std::size_t k = 0; k < dim; ++k) {
                dot += a.values[k] * b.values[k];
                na += a.values[k] * a.values[k];
                nb += b.values[k] * b.values[k];
            }
            if (na == 0 || nb == 0) return -std::numeric_limits<double>::infinity();
            return dot / (std::sqrt(na) * std::sqrt(nb));
        };
        double mean_rank = 0, r1 = 0, r5 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                double sa = cosine(qs[i], db[a]), sb = cosine(qs[i], db[b]);
                if (sa != sb) return sa > sb;
                return a < b;
            });
            std::size_t rank =
                1 + std::distance(order.begin(), std::find(order.begin(), order.end(), i));
            mean_rank += double(rank);
            r1 += rank <= 1;
            r5 += rank <= 5;
        }
        mean_rank /= double(n);
        CHECK(got.mean_rank == doctest::Approx(mean_rank).epsilon(1e-12));
        CHECK(got.recall_at.at(1) == doctest::Approx(r1 / double(n)).epsilon(1e-12));
        CHECK(got.recall_at.at(5) == doctest::Approx(r5 / double(n)).epsilon(1e-12));
    }
}

TEST_CASE("rank_retrieval validates its inputs") {
    std::vector<Tensor> a = {Tensor({2}, {1.0, 0.0})};
    std::vector<Tensor> b;
    CHECK_THROWS_AS(rank_retrieval(a, b, {1}), ConfigError);  // count mismatch
    CHECK_THROWS_AS(rank_retrieval(b, b, {1}), ConfigError);  // empty
}

TEST_CASE("eval config validation") {
    EvalConfig e;
    CHECK_NOTHROW(e.validate());
    e.probe_train_fraction = 1.5;
    CHECK_THROWS_AS(e.validate(), ConfigError);
    e = EvalConfig{};
    e.sweep_severities = {0.5, 0.25};  // unsorted
    CHECK_THROWS_AS(e.validate(), ConfigError);
    e = EvalConfig{};
    e.retrieval_ks = {};
    CHECK_THROWS_AS(e.validate(), ConfigError);
}

TEST_CASE("default corpus keeps classes and domains linearly decodable from pixels") {
    // Two guarantees the robustness experiments lean on: within one domain the
    // class is easy to read off raw pixels (so probe scores measure the
    // representation, not task difficulty), and the domain itself is
    // detectable (so cross-domain shift is a real shift).
    CorpusSpec cs;  // defaults: 2 classes x 2 domains x 32, 24x24
    auto corpus = generate_corpus(cs, 42);

    auto pixels_as_embedded = [&](const PairedSample& s) {
        EmbeddedSample e;
        e.id = s.id;
        e.class_label = s.class_label;
        e.domain = s.domain;
        e.z = Tensor({s.image.numel()}, s.image.values);
        e.z_v = e.z;
        e.z_l = e.z;
        return e;
    };
    auto run_probe = [&](const std::vector<EmbeddedSample>& emb, bool label_is_domain) {
        ProbeSplit split = make_split(emb, 0.7);
        auto gather = [&](const std::vector<std::size_t>& idx, Tensor& x, std::vector<int>& y) {
            std::size_t dim = emb[0].z.numel();
            x = Tensor::zeros({idx.size(), dim});
            y.clear();
            for (std::size_t r = 0; r < idx.size(); ++r) {
                const EmbeddedSample& e = emb[idx[r]];
                for (std::size_t c = 0; c < dim; ++c) x.at(r, c) = e.z.values[c];
                y.push_back(label_is_domain ? e.domain : e.class_label);
            }
        };
        Tensor xtr, xte;
        std::vector<int> ytr, yte;
        gather(split.train_idx, xtr, ytr);
        gather(split.test_idx, xte, yte);
        Probe p = fit_probe(xtr, ytr, 2, EvalConfig{});
        return probe_accuracy(p, xte, yte);
    };

    std::vector<EmbeddedSample> domain0;
    for (const auto& s : corpus) {
        if (s.domain == 0) domain0.push_back(pixels_as_embedded(s));
    }
    CHECK(run_probe(domain0, false) > 0.9);

    std::vector<EmbeddedSample> all;
    for (const auto& s : corpus) all.push_back(pixels_as_embedded(s));
    CHECK(run_probe(all, true) > 0.8);
}
