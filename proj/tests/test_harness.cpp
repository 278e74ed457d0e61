#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "superloc/harness.hpp"

using namespace superloc;

namespace {

const SystemConfig kCfg = SystemConfig::defaults();

CandidateSolution two_mobiles(Location a, Location b)
{
    CandidateSolution c;
    c.atoms = {{a, {100, 100}}, {b, {900, 900}}};
    c.weights = CMatrix::Ones(2, 4);
    return c;
}

Scenario two_scatterer_truth()
{
    Scenario sc;
    sc.condition = Condition::OLoS;
    sc.mobile = {500, 500};
    for (int j = 0; j < 4; ++j)
        sc.per_bs_paths.push_back({Path{Location{100, 100}, {1, 0}}, Path{Location{800, 200}, {1, 0}}});
    return sc;
}

} // namespace

TEST_CASE("condition names round-trip")
{
    for (Condition c : {Condition::LoS, Condition::OLoS, Condition::NLoS, Condition::Mixed})
        CHECK(parse_condition(to_string(c)) == c);
    CHECK(parse_condition("NLoS") == Condition::NLoS);
    CHECK_THROWS_AS(parse_condition("urban"), std::invalid_argument);
}

TEST_CASE("default scatterer counts")
{
    CHECK(default_num_scatterers(Condition::LoS) == 0);
    CHECK(default_num_scatterers(Condition::NLoS) == 1);
    CHECK(default_num_scatterers(Condition::OLoS) == 2);
    CHECK(default_num_scatterers(Condition::Mixed) == 2);
}

TEST_CASE("scenario path sets per condition")
{
    const Scene scene;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Scenario los = generate_scenario(Condition::LoS, 3, scene, GainModel::Unit, seed, kCfg);
        for (const auto& paths : los.per_bs_paths) {
            REQUIRE(paths.size() == 1);
            CHECK_FALSE(paths[0].scatter.has_value());
        }

        const Scenario olos = generate_scenario(Condition::OLoS, 2, scene, GainModel::RandomPhase, seed, kCfg);
        for (const auto& paths : olos.per_bs_paths) {
            CHECK(paths.size() == 2);
            for (const auto& p : paths) {
                REQUIRE(p.scatter.has_value());
                CHECK_FALSE(canonicalise_virtual_scatter({olos.mobile, p.scatter}) == olos.mobile);
                CHECK(scene.contains(*p.scatter));
            }
        }

        const Scenario nlos = generate_scenario(Condition::NLoS, 1, scene, GainModel::RandomPhase, seed, kCfg);
        for (const auto& paths : nlos.per_bs_paths) {
            int direct = 0, scattered = 0;
            for (const auto& p : paths)
                (p.scatter ? scattered : direct)++;
            CHECK(direct >= 1);
            CHECK(scattered >= 1);
        }

        const Scenario mixed = generate_scenario(Condition::Mixed, 2, scene, GainModel::RandomPhase, seed, kCfg);
        for (const auto& paths : mixed.per_bs_paths) {
            CHECK(paths.size() == 2);
            const bool has_direct = !paths[0].scatter.has_value();
            for (std::size_t i = has_direct ? 1 : 0; i < paths.size(); ++i)
                CHECK(paths[i].scatter.has_value());
        }
        CHECK(scene.contains(mixed.mobile));
        for (const auto& p : olos.per_bs_paths[0])
            CHECK(std::abs(std::abs(p.gain) - 1.0) < 1e-12);
    }
}

TEST_CASE("mixed assigns both path sets across seeds")
{
    int with_direct = 0, without = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Scenario sc = generate_scenario(Condition::Mixed, 2, Scene{}, GainModel::Unit, seed, kCfg);
        for (const auto& paths : sc.per_bs_paths)
            (paths[0].scatter ? without : with_direct)++;
    }
    CHECK(with_direct > 10);
    CHECK(without > 10);
}

TEST_CASE("scenario generation is deterministic and validated")
{
    const Scenario a = generate_scenario(Condition::Mixed, 2, Scene{}, GainModel::RandomPhase, 99, kCfg);
    const Scenario b = generate_scenario(Condition::Mixed, 2, Scene{}, GainModel::RandomPhase, 99, kCfg);
    CHECK(a.mobile == b.mobile);
    for (std::size_t j = 0; j < a.per_bs_paths.size(); ++j) {
        REQUIRE(a.per_bs_paths[j].size() == b.per_bs_paths[j].size());
        for (std::size_t k = 0; k < a.per_bs_paths[j].size(); ++k) {
            CHECK(a.per_bs_paths[j][k].scatter == b.per_bs_paths[j][k].scatter);
            CHECK(a.per_bs_paths[j][k].gain == b.per_bs_paths[j][k].gain);
        }
    }
    CHECK_THROWS_AS(generate_scenario(Condition::NLoS, 0, Scene{}, GainModel::Unit, 1, kCfg), InvalidCondition);
    CHECK_THROWS_AS(generate_scenario(Condition::OLoS, 1, Scene{{0, 0}, {0, 5}}, GainModel::Unit, 1, kCfg),
                    std::invalid_argument);
}

TEST_CASE("scenario clearance options are honoured")
{
    ScenarioOptions opt;
    opt.bs_clearance = 100;
    opt.min_separation = 150;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Scenario sc = generate_scenario(Condition::OLoS, 2, Scene{}, GainModel::Unit, seed, kCfg, opt);
        const auto pts = truth_scatterers(sc);
        for (const auto& b : kCfg.bs_positions) {
            CHECK(distance(sc.mobile, b) >= 100);
            for (const auto& p : pts)
                CHECK(distance(p, b) >= 100);
        }
        for (std::size_t i = 0; i < pts.size(); ++i) {
            CHECK(distance(pts[i], sc.mobile) >= 150);
            for (std::size_t k = i + 1; k < pts.size(); ++k)
                CHECK(distance(pts[i], pts[k]) >= 150);
        }
    }
}

TEST_CASE("truth scatterers include the virtual scatterer once")
{
    const Scenario sc = generate_scenario(Condition::NLoS, 2, Scene{}, GainModel::Unit, 5, kCfg);
    const auto pts = truth_scatterers(sc);
    REQUIRE(pts.size() == 3);
    CHECK(pts[0] == sc.mobile);
}

TEST_CASE("extract_ms examples")
{
    CandidateSolution one;
    one.atoms = {{{500, 500}, {100, 100}}};
    one.weights = CMatrix::Ones(1, 4);
    CHECK(extract_ms(one).location == Location{500, 500});
    CHECK_FALSE(extract_ms(one).ambiguous);

    const MsEstimate same = extract_ms(two_mobiles({500, 500}, {500, 500}));
    CHECK(same.location == Location{500, 500});
    CHECK_FALSE(same.ambiguous);

    const MsEstimate split = extract_ms(two_mobiles({500, 500}, {520, 500}));
    CHECK(split.location.x == doctest::Approx(510));
    CHECK(split.location.y == doctest::Approx(500));
    CHECK(split.ambiguous);
    CHECK(split.spread == doctest::Approx(20));

    CHECK_THROWS_AS(extract_ms(empty_candidate(4)), EmptyCandidate);
}

TEST_CASE("ranked scatterers follow the gain norm")
{
    CandidateSolution c = two_mobiles({1, 1}, {2, 2});
    c.weights.row(1) *= 3.0;
    const auto r = ranked_scatterers(c);
    CHECK(r[0] == Location{900, 900});
    CHECK(r[1] == Location{100, 100});
}

TEST_CASE("association examples")
{
    const std::vector<Location> pts{{10, 10}, {500, 20}, {300, 900}};
    const Association id = associate_scatters(pts, pts);
    REQUIRE(id.pairs.size() == 3);
    for (const auto& [e, t] : id.pairs)
        CHECK(e == t);

    const Association single = associate_scatters({{1, 1}}, {{700, 700}});
    REQUIRE(single.pairs.size() == 1);
    CHECK(single.pairs[0] == std::pair<int, int>{0, 0});

    const Association extra = associate_scatters({{1, 1}, {2, 2}}, {{0, 0}});
    CHECK(extra.unmatched_estimates == std::vector<int>{1});
    const Association missing = associate_scatters({{1, 1}}, {{0, 0}, {9, 9}});
    CHECK(missing.unmatched_truths == std::vector<int>{1});
}

TEST_CASE("greedy association agrees with brute force when estimates are near distinct truths")
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0, 1000);
    std::uniform_real_distribution<double> jitter(-7, 7);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<Location> truth;
        while (truth.size() < 3) {
            const Location p{u(rng), u(rng)};
            bool ok = true;
            for (const auto& q : truth)
                ok = ok && distance(p, q) > 40;
            if (ok)
                truth.push_back(p);
        }
        std::vector<int> perm{0, 1, 2};
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<Location> est;
        for (int i : perm)
            est.push_back(truth[static_cast<std::size_t>(i)] + Location{jitter(rng), jitter(rng)});
        const auto best = oracle::brute_force_assignment(est, truth);
        const Association a = associate_scatters(est, truth);
        REQUIRE(a.pairs.size() == 3);
        for (const auto& [e, t] : a.pairs)
            CHECK(t == best[static_cast<std::size_t>(e)]);
    }
}

TEST_CASE("rmse examples")
{
    const Scenario sc = two_scatterer_truth();
    CHECK(rmse({500, 500}, {{100, 100}, {800, 200}}, sc).rmse == 0.0);
    CHECK(rmse({501, 500}, {{100, 101}, {799, 200}}, sc).rmse == doctest::Approx(1.0));
    const RmseBreakdown r = rmse({500, 503}, {{101, 100}, {800, 202}}, sc);
    CHECK(r.rmse == doctest::Approx(2.0));
    CHECK(r.ms_error == doctest::Approx(3.0));
    CHECK(r.scatter_errors == std::vector<double>{1.0, 2.0});

    // A missed scatterer is charged its distance to the nearest estimate.
    const RmseBreakdown miss = rmse({500, 500}, {{100, 100}}, sc);
    CHECK(miss.scatter_errors[1] == doctest::Approx(distance({800, 200}, {100, 100})));
    CHECK(miss.matched_rmse == 0.0);
}

TEST_CASE("single noiseless trial recovers the geometry")
{
    MonteCarloOptions opt;
    opt.scenario.min_separation = 50;
    const MonteCarloResult r =
        run_monte_carlo(Condition::NLoS, {INFINITY}, 1, kCfg, SolverConfig{}, 42, opt);
    REQUIRE(r.table.size() == 1);
    CHECK(r.table[0].mean_rmse_m < 0.5);
    CHECK(r.table[0].trials == 1);
    CHECK(r.trials[0].runtime_s == 0.0);
}

TEST_CASE("monte carlo is independent of the thread count")
{
    MonteCarloOptions opt;
    const MonteCarloResult a = run_monte_carlo(Condition::Mixed, {0.0, 10.0}, 3, kCfg, SolverConfig{}, 7, opt);
    opt.threads = 3;
    const MonteCarloResult b = run_monte_carlo(Condition::Mixed, {0.0, 10.0}, 3, kCfg, SolverConfig{}, 7, opt);
    REQUIRE(a.trials.size() == 6);
    for (std::size_t i = 0; i < a.trials.size(); ++i) {
        CHECK(a.trials[i].rmse_m == b.trials[i].rmse_m);
        CHECK(a.trials[i].snr_db == b.trials[i].snr_db);
        CHECK(a.trials[i].trial == b.trials[i].trial);
    }
    CHECK(a.table[1].mean_rmse_m == b.table[1].mean_rmse_m);
    CHECK_THROWS_AS(run_monte_carlo(Condition::Mixed, {0.0}, 0, kCfg, SolverConfig{}, 7), std::invalid_argument);
}

TEST_CASE("generate_trial reproduces the trial inputs")
{
    const MonteCarloOptions opt;
    const TrialData a = generate_trial(Condition::OLoS, 0.0, 3, kCfg, SolverConfig{}, 11, opt, 0);
    const TrialData b = generate_trial(Condition::OLoS, 0.0, 3, kCfg, SolverConfig{}, 11, opt, 0);
    CHECK(a.scenario.mobile == b.scenario.mobile);
    CHECK(a.measurements.per_bs[2] == b.measurements.per_bs[2]);
    const TrialData c = generate_trial(Condition::OLoS, 0.0, 3, kCfg, SolverConfig{}, 11, opt, 1);
    CHECK(a.scenario.mobile == c.scenario.mobile);
    CHECK_FALSE(a.measurements.per_bs[2] == c.measurements.per_bs[2]);
}
