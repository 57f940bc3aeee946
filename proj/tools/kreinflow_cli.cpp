// kreinflow command line runner: generate instances, run eigenvalue flows,
// verify the displacement bound over seeded batches.
//
// Exit codes: 0 pass, 2 check failure, 3 invalid instance or hypotheses,
// 4 numerical failure.

#include <CLI11.hpp>

#include <kreinflow/kreinflow.hpp>

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace kf = kreinflow;

namespace {

kf::Interval parse_interval(const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos)
        throw kf::Error("interval must be given as a,b");
    try {
        const double lo = std::stod(text.substr(0, comma));
        const double hi = std::stod(text.substr(comma + 1));
        return kf::Interval(lo, hi);
    } catch (const std::invalid_argument&) {
        throw kf::Error("interval endpoints must be numbers");
    } catch (const std::out_of_range&) {
        throw kf::Error("interval endpoints out of range");
    }
}

// "0.3:+,-0.2:-" -> entries placed on the next unused direction of the
// requested type sign; unlisted directions keep eigenvalue zero.
std::vector<kf::EigenEntry> parse_entry_list(const std::string& text, int n, int n_plus) {
    std::vector<kf::EigenEntry> entries(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) entries[static_cast<std::size_t>(i)] = {0.0, i < n_plus ? 1 : -1};
    int next_plus = 0, next_minus = n_plus;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.rfind(':');
        if (colon == std::string::npos || colon + 2 != item.size())
            throw kf::Error("entry '" + item + "' must look like value:+ or value:-");
        const char sign_char = item[colon + 1];
        if (sign_char != '+' && sign_char != '-')
            throw kf::Error("entry '" + item + "' must end in :+ or :-");
        double value = 0.0;
        try {
            value = std::stod(item.substr(0, colon));
        } catch (const std::exception&) {
            throw kf::Error("entry '" + item + "' has a malformed value");
        }
        int& cursor = sign_char == '+' ? next_plus : next_minus;
        const int limit = sign_char == '+' ? n_plus : n;
        if (cursor >= limit)
            throw kf::SignMismatch("no remaining direction of type " +
                                   std::string(1, sign_char) + " for entry '" + item + "'");
        entries[static_cast<std::size_t>(cursor)].value = value;
        ++cursor;
    }
    return entries;
}

struct SourceArgs {
    std::string preset;
    std::string instance_file;
    std::string spec;          // inline JSON or a file path
    std::uint64_t seed = 0;
    bool seed_given = false;
};

kf::Instance load_instance(const SourceArgs& src, kf::Interval* default_interval) {
    int sources = 0;
    if (!src.preset.empty()) ++sources;
    if (!src.instance_file.empty()) ++sources;
    if (!src.spec.empty()) ++sources;
    if (sources != 1)
        throw kf::Error("exactly one of --preset, --instance, --spec is required");

    if (!src.preset.empty()) {
        kf::Preset p = kf::preset(src.preset);
        if (default_interval) *default_interval = p.default_interval;
        return p.instance;
    }
    if (!src.instance_file.empty())
        return kf::instance_from_json(kf::load_json_file(src.instance_file));

    kf::json j = src.spec.find('{') != std::string::npos ? kf::json::parse(src.spec, nullptr, true)
                                                         : kf::load_json_file(src.spec);
    if (src.seed_given) j["seed"] = src.seed;
    return kf::instance_from_generator_spec(j);
}

int run_gen(const std::string& preset_name, int n, int n_plus, bool plus_given,
            std::uint64_t seed, bool seed_given, int rank, double spread, bool spread_given,
            const std::string& lambdas, const std::string& gammas, const std::string& out) {
    kf::Instance inst = [&] {
        if (!preset_name.empty()) return kf::preset(preset_name).instance;
        const int plus = plus_given ? n_plus : n;
        kf::RandomConfig cfg;
        cfg.n = n;
        cfg.n_plus = plus;
        cfg.seed = seed;
        cfg.c_rank = rank;
        if (spread_given) cfg.basis_spread = spread;
        else if (!seed_given && lambdas.empty() && gammas.empty())
            cfg.basis_spread = 0.35;
        else if (!seed_given)
            cfg.basis_spread = 0.0;
        kf::InstanceSpec spec = kf::random_spec(cfg);
        if (!lambdas.empty()) spec.a_entries = parse_entry_list(lambdas, n, plus);
        if (!gammas.empty()) spec.c_entries = parse_entry_list(gammas, n, plus);
        return kf::instance_from_spec(spec, lambdas.empty() && gammas.empty() ? "random" : "gen");
    }();

    const auto cert_a = kf::is_nonnegative(inst.a);
    const auto cert_c = kf::is_nonnegative(inst.c);
    if (!cert_a) throw kf::NotNonnegative("generated A is not non-negative");
    if (!cert_c) throw kf::NotNonnegative("generated C is not non-negative");
    if (!kf::regularity_check(inst.c))
        throw kf::RegularityViolated("generated C violates rank C = rank C^2");

    const std::string text = kf::instance_to_json(inst).dump(2) + "\n";
    if (out.empty()) {
        std::cout << text;
    } else {
        kf::write_file(out, text);
    }
    std::cerr << "instance '" << inst.name << "': n=" << inst.space.dim() << " (+"
              << inst.space.plus_count() << "/-" << inst.space.minus_count()
              << "), non-negative A and C, regularity OK"
              << (out.empty() ? "" : ", written to " + out) << "\n";
    return 0;
}

int run_flow(const kf::Instance& inst, const kf::RunConfig& cfg, const std::string& out_traj,
             const std::string& out_report, bool quiet = false) {
    kf::PipelineResult res = kf::run_pipeline(inst, cfg);

    if (!out_traj.empty()) {
        std::ostringstream os;
        kf::write_trajectory_csv(os, kf::trajectory_rows(res));
        kf::write_file(out_traj, os.str());
    }
    const kf::json rep = kf::report_to_json(inst, res);
    if (!out_report.empty()) kf::write_file(out_report, rep.dump(2) + "\n");

    if (!quiet)
        std::cout << "instance '" << inst.name << "': delta=" << res.delta
                  << " lp_sum=" << res.enumeration.lp_sum
                  << " bound_rhs=" << res.enumeration.bound_rhs
                  << " margin=" << res.enumeration.margin
                  << " passed=" << (res.passed() ? "yes" : "no") << "\n";
    return res.passed() ? 0 : 2;
}

struct VerifyOutcome {
    std::uint64_t seed = 0;
    int code = 0;
    double margin = 0.0;
    std::string detail;
};

int run_verify(int count, std::uint64_t seed0, int n, int n_plus, bool plus_given, int rank,
               double spread, bool spread_given, const kf::RunConfig& cfg,
               const std::string& out_report) {
    std::vector<VerifyOutcome> outcomes(static_cast<std::size_t>(count));

    int threads = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("KREIN_FLOW_THREADS")) {
        try {
            threads = std::max(1, std::stoi(env));
        } catch (const std::exception&) {
            threads = 1;
        }
    }
    threads = std::max(1, std::min(threads, std::max(count, 1)));

    std::atomic<int> next{0};
    const auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= count) return;
            VerifyOutcome& out = outcomes[static_cast<std::size_t>(i)];
            out.seed = seed0 + static_cast<std::uint64_t>(i);
            try {
                kf::RandomConfig rc;
                rc.n = n;
                rc.n_plus = plus_given ? n_plus : (n + 1) / 2;
                rc.seed = out.seed;
                rc.c_rank = rank;
                if (spread_given) rc.basis_spread = spread;
                const kf::Instance inst = kf::random_instance(rc);
                const kf::PipelineResult res = kf::run_pipeline(inst, cfg);
                out.margin = res.enumeration.margin;
                out.code = res.passed() ? 0 : 2;
                if (out.code != 0) out.detail = "checks failed";
            } catch (const std::exception& e) {
                out.code = kf::exit_code_for(e);
                out.detail = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    int failures = 0, aggregate = 0;
    double min_margin = 0.0;
    bool have_margin = false;
    for (const auto& out : outcomes) {
        std::cout << "seed=" << out.seed << " "
                  << (out.code == 0 ? "pass" : "FAIL(" + std::to_string(out.code) + ")");
        if (out.code == 0) {
            std::cout << " margin=" << kf::format_full(out.margin);
            if (!have_margin || out.margin < min_margin) min_margin = out.margin;
            have_margin = true;
        } else {
            ++failures;
            aggregate = std::max(aggregate, out.code);
            if (!out.detail.empty()) std::cout << " " << out.detail;
        }
        std::cout << "\n";
    }
    std::cout << count << " instances, " << failures << " failures";
    if (have_margin) std::cout << ", min margin " << kf::format_full(min_margin);
    std::cout << "\n";

    if (!out_report.empty()) {
        kf::json rep;
        rep["count"] = count;
        rep["failures"] = failures;
        rep["min_margin"] = have_margin ? kf::json(min_margin) : kf::json();
        kf::json per = kf::json::array();
        for (const auto& out : outcomes)
            per.push_back(kf::json{{"seed", out.seed},
                                   {"exit", out.code},
                                   {"margin", out.margin},
                                   {"detail", out.detail}});
        rep["instances"] = per;
        kf::write_file(out_report, rep.dump(2) + "\n");
    }
    return aggregate;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Indefinite-metric eigenvalue flow laboratory"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "Generate an instance file");
    std::string gen_preset, gen_lambdas, gen_gammas, gen_out;
    int gen_n = 6, gen_plus = 3, gen_rank = -1;
    double gen_spread = 0.0;
    std::uint64_t gen_seed = 1;
    gen->add_option("--preset", gen_preset, "Preset name");
    gen->add_option("--n", gen_n, "Dimension");
    auto* gen_plus_opt = gen->add_option("--plus", gen_plus, "Positive signature count");
    auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "Generator seed");
    gen->add_option("--rank", gen_rank, "Rank of C (-1 for random)");
    auto* gen_spread_opt = gen->add_option("--spread", gen_spread, "Hyperbolic basis spread");
    gen->add_option("--lambdas", gen_lambdas, "Eigenvalues of A as value:+ or value:-, comma separated");
    gen->add_option("--gammas", gen_gammas, "Eigenvalues of C as value:+ or value:-, comma separated");
    gen->add_option("-o,--out", gen_out, "Output file (stdout when omitted)");

    // shared run options
    const auto add_run_options = [](CLI::App* cmd, std::string& interval, double& p, int& steps,
                                    double& tol) {
        cmd->add_option("--interval", interval, "Spectral interval a,b");
        cmd->add_option("--p", p, "Summability exponent, p >= 1");
        cmd->add_option("--steps", steps, "Grid points over [0,1], >= 2");
        cmd->add_option("--tol", tol, "Numerical tolerance override");
    };

    // flow
    auto* flow = app.add_subcommand("flow", "Track a flow and verify the bound");
    SourceArgs flow_src;
    std::string flow_interval, flow_traj, flow_report;
    double flow_p = 1.0, flow_tol = 0.0;
    int flow_steps = 101;
    flow->add_option("--preset", flow_src.preset, "Preset name");
    flow->add_option("--instance", flow_src.instance_file, "Instance JSON file");
    flow->add_option("--spec", flow_src.spec, "Generator spec (inline JSON or file)");
    auto* flow_seed_opt = flow->add_option("--seed", flow_src.seed, "Seed override for --spec");
    add_run_options(flow, flow_interval, flow_p, flow_steps, flow_tol);
    flow->add_option("--out-traj", flow_traj, "Trajectory CSV path");
    flow->add_option("--out-report", flow_report, "Report JSON path");

    // verify
    auto* verify = app.add_subcommand("verify", "Batch verification over seeded instances");
    std::string verify_interval = "1,3", verify_report;
    double verify_p = 1.0, verify_tol = 0.0, verify_spread = 0.35;
    int verify_steps = 101, verify_count = 20, verify_n = 6, verify_plus = 3, verify_rank = -1;
    std::uint64_t verify_seed = 1;
    verify->add_option("--count", verify_count, "Number of instances");
    verify->add_option("--seed", verify_seed, "First seed");
    verify->add_option("--n", verify_n, "Dimension");
    auto* verify_plus_opt = verify->add_option("--plus", verify_plus, "Positive signature count");
    verify->add_option("--rank", verify_rank, "Rank of C (-1 for random)");
    auto* verify_spread_opt =
        verify->add_option("--spread", verify_spread, "Hyperbolic basis spread");
    add_run_options(verify, verify_interval, verify_p, verify_steps, verify_tol);
    verify->add_option("--out-report", verify_report, "Aggregate report JSON path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return run_gen(gen_preset, gen_n, gen_plus, gen_plus_opt->count() > 0, gen_seed,
                           gen_seed_opt->count() > 0, gen_rank, gen_spread,
                           gen_spread_opt->count() > 0, gen_lambdas, gen_gammas, gen_out);

        if (flow->parsed()) {
            flow_src.seed_given = flow_seed_opt->count() > 0;
            kf::Interval interval(1.0, 3.0);
            const kf::Instance inst = load_instance(flow_src, &interval);
            if (!flow_interval.empty()) interval = parse_interval(flow_interval);
            kf::RunConfig cfg;
            cfg.interval = interval;
            cfg.p = flow_p;
            cfg.grid_steps = flow_steps;
            cfg.tol = flow_tol;
            return run_flow(inst, cfg, flow_traj, flow_report);
        }

        if (verify->parsed()) {
            kf::RunConfig cfg;
            cfg.interval = parse_interval(verify_interval);
            cfg.p = verify_p;
            cfg.grid_steps = verify_steps;
            cfg.tol = verify_tol;
            return run_verify(verify_count, verify_seed, verify_n, verify_plus,
                              verify_plus_opt->count() > 0, verify_rank, verify_spread,
                              verify_spread_opt->count() > 0, cfg, verify_report);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        const int code = kf::exit_code_for(e);
        if (flow->parsed() && !flow_report.empty()) {
            try {
                kf::json rep;
                rep["error"] = e.what();
                rep["exit_status"] = code;
                kf::write_file(flow_report, rep.dump(2) + "\n");
            } catch (const std::exception&) {
            }
        }
        return code;
    }
    return 0;
}
