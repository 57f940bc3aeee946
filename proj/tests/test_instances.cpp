#include <catch2/catch_amalgamated.hpp>

#include <kreinflow/instances.hpp>
#include <kreinflow/spectral.hpp>

#include <random>

using namespace kreinflow;

TEST_CASE("operators built from prescribed eigendata") {
    const KreinSpace space(std::vector<int>{1, -1});
    const JOrthonormalFamily basis =
        j_orthonormalize(Matrix(Matrix::Identity(2, 2)), space);

    const DenseOperator a = build_operator({{2.0, 1}, {-1.0, -1}}, basis, space);
    Matrix want(2, 2);
    want << 2.0, 0.0, 0.0, -1.0;
    CHECK(max_norm(Matrix(a.mat() - want)) == 0.0);

    CHECK_THROWS_AS(build_operator({{2.0, 1}, {0.5, -1}}, basis, space), SignMismatch);
    CHECK_THROWS_AS(build_operator({{-2.0, 1}, {0.0, -1}}, basis, space), SignMismatch);
    CHECK_THROWS_AS(build_operator({{2.0, 1}}, basis, space), DimensionMismatch);
}

TEST_CASE("instances from specs are deterministic and valid") {
    InstanceSpec spec;
    spec.n = 5;
    spec.n_plus = 3;
    spec.seed = 321;
    spec.basis_spread = 0.3;
    spec.a_entries = {{1.0, 1}, {2.5, 1}, {0.0, 1}, {-0.7, -1}, {-1.9, -1}};
    spec.c_entries = {{0.4, 1}, {0.0, 1}, {0.0, 1}, {-0.1, -1}, {0.0, -1}};

    const Instance one = instance_from_spec(spec);
    const Instance two = instance_from_spec(spec);
    CHECK(max_norm(Matrix(one.a.mat() - two.a.mat())) == 0.0);
    CHECK(max_norm(Matrix(one.c.mat() - two.c.mat())) == 0.0);

    CHECK(is_nonnegative(one.a));
    CHECK(is_nonnegative(one.c));
    CHECK(regularity_check(one.c));
    CHECK(is_selfadjoint(one.a));

    // the prescribed eigenvalues come back out
    const SpectrumReport rep = eigen_nonnegative(one.a);
    CHECK(rep.kernel_dimension() == 1);
    REQUIRE(rep.cluster_count() == 4);
    CHECK(rep.eigenvalues[0] == Catch::Approx(-1.9).margin(1e-10));
    CHECK(rep.eigenvalues[3] == Catch::Approx(2.5).margin(1e-10));
}

TEST_CASE("random specs respect their configuration") {
    RandomConfig cfg;
    cfg.n = 9;
    cfg.n_plus = 5;
    cfg.seed = 77;
    cfg.c_rank = 3;
    cfg.zero_count = 2;

    const InstanceSpec spec = random_spec(cfg);
    CHECK(spec.n == 9);
    int zeros = 0, c_nonzero = 0;
    for (const auto& e : spec.a_entries) {
        if (e.value == 0.0) ++zeros;
        else {
            CHECK(std::abs(e.value) >= cfg.eig_min);
            CHECK(std::abs(e.value) <= cfg.eig_max);
            CHECK((e.value > 0) == (e.sign > 0));
        }
    }
    for (const auto& e : spec.c_entries)
        if (e.value != 0.0) {
            ++c_nonzero;
            CHECK(std::abs(e.value) >= cfg.gamma_min);
            CHECK(std::abs(e.value) <= cfg.gamma_max);
        }
    CHECK(zeros == 2);
    CHECK(c_nonzero == 3);

    const Instance inst = random_instance(cfg);
    CHECK(is_nonnegative(inst.a));
    CHECK(is_nonnegative(inst.c));
    CHECK(regularity_check(inst.c));

    // hypotheses hold across a swath of seeds and shapes
    for (std::uint64_t seed = 500; seed < 520; ++seed) {
        RandomConfig rc;
        rc.n = 2 + static_cast<int>(seed % 11);
        rc.n_plus = rc.n - rc.n / 3;
        rc.seed = seed;
        const Instance r = random_instance(rc);
        CHECK(is_nonnegative(r.a));
        CHECK(is_nonnegative(r.c));
        CHECK(regularity_check(r.c));
    }
}

TEST_CASE("presets load and carry valid hypotheses") {
    for (const std::string& name : preset_names()) {
        const Preset p = preset(name);
        CHECK(p.instance.name == name);
        CHECK(is_nonnegative(p.instance.a));
        CHECK(is_nonnegative(p.instance.c));
        CHECK(regularity_check(p.instance.c));
        CHECK(p.default_interval.lo < p.default_interval.hi);
    }
    CHECK_THROWS_AS(preset("no-such-thing"), UnknownPreset);
}

TEST_CASE("cluster gap preset shape") {
    const Preset p = preset("cluster-gap");
    CHECK(p.instance.space.dim() == 12);
    CHECK(p.instance.space.plus_count() == 8);

    const SpectrumReport rep = eigen_nonnegative(p.instance.a);
    CHECK(rep.kernel_dimension() == 0);
    CHECK(rep.nonzero_dimension() == 12);
    int pos = 0, neg = 0;
    for (int c = 0; c < rep.cluster_count(); ++c)
        (rep.type_signs[static_cast<std::size_t>(c)] > 0 ? pos : neg) +=
            rep.multiplicities[static_cast<std::size_t>(c)];
    CHECK(pos == 8);
    CHECK(neg == 4);
}

TEST_CASE("generation failure is reported, not looped forever") {
    std::mt19937_64 rng(1);
    const KreinSpace space = KreinSpace::with_counts(2, 2);
    CHECK_THROWS_AS(detail::random_basis(space, 0.35, rng, 1e3, 0), GenerationFailed);
}
