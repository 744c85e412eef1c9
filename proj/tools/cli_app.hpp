#pragma once

// The unobs-lab command line, kept in a header so tests can drive it
// in-process. Exit codes: 0 success, 1 domain/numeric error, 2 usage error.

#include <charconv>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "unobs_lab/unobs_lab.hpp"

namespace unobs_cli {

using nlohmann::json;
using namespace unobs_lab;

/// Flag values that parse but make no sense (bad lists, bad ranges).
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::vector<double> parse_real_list(const std::string& text, const std::string& flag) {
    std::vector<double> out;
    std::string_view rest = text;
    while (true) {
        const auto comma = rest.find(',');
        std::string_view item = rest.substr(0, comma);
        if (!item.empty() && item.front() == '+') item.remove_prefix(1);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size())
            throw UsageError(flag + ": cannot parse '" + text + "' as a comma-separated list of reals");
        out.push_back(v);
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
    }
    return out;
}

inline std::vector<std::size_t> parse_size_list(const std::string& text, const std::string& flag) {
    std::vector<std::size_t> out;
    for (double v : parse_real_list(text, flag)) {
        if (!(v >= 1.0) || v != std::floor(v)) throw UsageError(flag + ": sizes must be integers >= 1");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

/// "3", "1..4" or "1,2,5".
inline std::vector<unsigned> parse_k_range(const std::string& text) {
    const auto dots = text.find("..");
    std::vector<unsigned> ks;
    auto to_k = [&](double v) {
        if (!(v >= 1.0) || v != std::floor(v) || v > 1000.0)
            throw UsageError("--k: orders must be integers in [1, 1000], got '" + text + "'");
        return static_cast<unsigned>(v);
    };
    if (dots != std::string::npos) {
        const unsigned lo = to_k(parse_real_list(text.substr(0, dots), "--k").at(0));
        const unsigned hi = to_k(parse_real_list(text.substr(dots + 2), "--k").at(0));
        if (hi < lo) throw UsageError("--k: empty range '" + text + "'");
        for (unsigned k = lo; k <= hi; ++k) ks.push_back(k);
    } else {
        for (double v : parse_real_list(text, "--k")) ks.push_back(to_k(v));
    }
    return ks;
}

inline json fit_to_json(const FitResult& fit) {
    return json{{"xi", std::vector<double>(fit.params.xi.data(), fit.params.xi.data() + fit.params.xi.size())},
                {"lambda", fit.params.lambda},
                {"phi", fit.params.phi},
                {"loglik", fit.loglik},
                {"converged", fit.converged},
                {"iterations", fit.iterations},
                {"constraint_active", fit.constraint_active}};
}

inline json decomposition_row(const DecompRow& r) {
    return json{{"sigma2", r.sigma2_part}, {"d", r.d_part}, {"two_tau", r.two_tau_part}, {"total", r.total()}};
}

inline json equivalence_report(double lambda2, double nu2, double alpha, std::size_t n) {
    const ExtendedSpec spec(lambda2, nu2, alpha);
    const auto [d, tau] = derive_d_tau(lambda2, nu2, alpha);
    const auto marginal = marginal_cov_extended(spec, n);
    const auto dec = decomposition_table(lambda2, nu2, alpha);
    json j{{"lambda2", lambda2},
           {"nu2", nu2},
           {"alpha", alpha},
           {"n", n},
           {"d", d},
           {"tau", tau},
           {"slack", psd_slack(spec)},
           {"joint_psd_margin", joint_psd_margin(spec, n)},
           {"marginal_cov", marginal.row_major()},
           {"decomposition", {{"variance", decomposition_row(dec.variance)},
                              {"covariance", decomposition_row(dec.covariance)}}}};
    // The class itself only needs lambda2 + nu2 > 0; shrinkage also needs the
    // marginal to be PD at this cluster size.
    if (const auto check = validate_cs({n}, lambda2, nu2); check) {
        j["shrinkage"] = eb_shrinkage(spec, n);
    } else {
        j["shrinkage"] = nullptr;
        j["pd_violation"] = check.diagnostic;
    }
    return j;
}

inline json moments_report(const WeibullExpSpec& spec, const std::vector<unsigned>& ks) {
    json arr = json::array();
    for (unsigned k : ks) {
        const MomentResult m = we_moment(spec, k);
        json v = m.value ? json(*m.value) : json(nullptr);
        arr.push_back({{"k", m.k}, {"formula_defined", m.formula_defined}, {"integral_finite", m.integral_finite},
                       {"value", v}});
    }
    return arr;
}

inline void write_lines(std::ostream& os, const std::vector<double>& values) {
    for (double v : values) os << format_real(v) << '\n';
}

/// Writes `text` to `path`, or to `out` when the path is empty.
inline void emit(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << text;
    if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

inline SimLayout make_layout(std::size_t clusters, std::size_t size, const std::string& sizes_text,
                             const std::string& design) {
    SimLayout layout;
    if (!sizes_text.empty()) {
        layout.sizes = parse_size_list(sizes_text, "--sizes");
        if (clusters != 0 && clusters != layout.sizes.size())
            throw UsageError("--clusters disagrees with the number of --sizes entries");
    } else {
        if (clusters == 0 || size == 0) throw UsageError("simulate needs --clusters and --size (or --sizes)");
        layout = SimLayout::balanced(clusters, size);
    }
    if (design == "time") {
        for (std::size_t n : layout.sizes) {
            Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 2);
            for (Eigen::Index j = 0; j < x.rows(); ++j) {
                x(j, 0) = 1.0;
                x(j, 1) = static_cast<double>(j);
            }
            layout.designs.push_back(std::move(x));
        }
    }
    return layout;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Compound-symmetry mixed models, their unidentified hierarchies, and heavy-tailed frailty laws",
                 "unobs-lab"};
    app.require_subcommand(1);

    std::string out_path;
    std::uint64_t seed = 0;

    // equivalence
    double eq_lambda2 = 0, eq_nu2 = 0;
    std::string eq_grid = "-1,-0.5,0,0.5,1";
    std::size_t eq_n = 2;
    auto* eq = app.add_subcommand("equivalence", "Report the alpha-indexed hierarchies sharing one marginal");
    eq->add_option("--lambda2", eq_lambda2, "Marginal within-cluster covariance lambda^2")->required();
    eq->add_option("--nu2", eq_nu2, "Marginal error variance nu^2")->required();
    eq->add_option("--alpha-grid", eq_grid, "Comma-separated alpha values in [-1, 1]")->capture_default_str();
    eq->add_option("--n", eq_n, "Cluster size for shrinkage and covariance")->capture_default_str();
    eq->add_option("--out", out_path, "Output path (default stdout)");

    // simulate
    std::string sim_model = "cs", sim_xi, sim_sizes, sim_design = "intercept", sim_latent;
    double sim_lambda = 0, sim_phi = 1, sim_lambda2 = 0, sim_nu2 = 1, sim_alpha = 0;
    std::size_t sim_clusters = 0, sim_size = 0;
    auto* sim = app.add_subcommand("simulate", "Simulate a clustered dataset as long-format CSV");
    sim->add_option("--model", sim_model, "cs or extended")->check(CLI::IsMember({"cs", "extended"}));
    sim->add_option("--lambda", sim_lambda, "cs: within-cluster covariance");
    sim->add_option("--phi", sim_phi, "cs: residual variance");
    sim->add_option("--lambda2", sim_lambda2, "extended: marginal lambda^2");
    sim->add_option("--nu2", sim_nu2, "extended: marginal nu^2");
    sim->add_option("--alpha", sim_alpha, "extended: class index");
    sim->add_option("--xi", sim_xi, "Comma-separated fixed effects (default zeros)");
    sim->add_option("--clusters", sim_clusters, "Number of clusters");
    auto* size_opt = sim->add_option("--size", sim_size, "Common cluster size");
    sim->add_option("--sizes", sim_sizes, "Comma-separated cluster sizes")->excludes(size_opt);
    sim->add_option("--design", sim_design, "intercept or time (intercept plus 0-based unit index)")
        ->check(CLI::IsMember({"intercept", "time"}));
    sim->add_option("--seed", seed, "Master seed")->required();
    sim->add_option("--out", out_path, "Output path (default stdout)");
    sim->add_option("--latent", sim_latent, "extended: sidecar CSV with the latent draws");

    // fit
    std::string data_path;
    auto* fit = app.add_subcommand("fit", "Maximum-likelihood fit of the compound-symmetry model");
    fit->add_option("--data", data_path, "Long-format CSV")->required();
    fit->add_option("--out", out_path, "Output path (default stdout)");

    // eb
    std::string eb_grid = "-1,-0.5,0,0.5,1";
    auto* eb = app.add_subcommand("eb", "Fit, then empirical-Bayes predictions under each alpha-member");
    eb->add_option("--data", data_path, "Long-format CSV")->required();
    eb->add_option("--alpha-grid", eb_grid, "Comma-separated alpha values in [-1, 1]")->capture_default_str();
    eb->add_option("--out", out_path, "Output path (default stdout)");

    // heavytail
    double ht_phi = 1, ht_rho = 1, ht_delta = 1;
    std::string ht_k = "1..4";
    std::size_t ht_n = 0, ht_stride = 100;
    auto* ht = app.add_subcommand("heavytail", "Weibull-exponential law: moments, samples, running means");
    ht->require_subcommand(1);
    auto add_law = [&](CLI::App* c) {
        c->add_option("--phi", ht_phi, "Rate phi")->required();
        c->add_option("--rho", ht_rho, "Weibull shape rho")->required();
        c->add_option("--delta", ht_delta, "Frailty rate delta")->required();
        c->add_option("--out", out_path, "Output path (default stdout)");
    };
    auto* ht_moments = ht->add_subcommand("moments", "Tri-state moment report per order k");
    add_law(ht_moments);
    ht_moments->add_option("--k", ht_k, "Orders: 3, 1..4 or 1,2,5")->capture_default_str();
    auto* ht_sample = ht->add_subcommand("sample", "Inverse-CDF draws, one per line");
    add_law(ht_sample);
    ht_sample->add_option("--n", ht_n, "Number of draws")->required();
    ht_sample->add_option("--seed", seed, "Master seed")->required();
    auto* ht_trace = ht->add_subcommand("trace", "Running sample mean as CSV n,running_mean");
    add_law(ht_trace);
    ht_trace->add_option("--n", ht_n, "Number of draws")->required();
    ht_trace->add_option("--stride", ht_stride, "Report every stride draws")->capture_default_str();
    ht_trace->add_option("--seed", seed, "Master seed")->required();

    // pit
    std::string pit_dist = "weibull-exp";
    auto* pit = app.add_subcommand("pit", "Probability-integral-transform draws from a normal source");
    pit->add_option("--dist", pit_dist, "Target law")->check(CLI::IsMember({"weibull-exp"}))->required();
    pit->add_option("--phi", ht_phi, "Rate phi")->required();
    pit->add_option("--rho", ht_rho, "Weibull shape rho")->required();
    pit->add_option("--delta", ht_delta, "Frailty rate delta")->required();
    pit->add_option("--n", ht_n, "Number of draws")->required();
    pit->add_option("--seed", seed, "Master seed")->required();
    pit->add_option("--out", out_path, "Output path (default stdout)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    const unsigned threads = configured_threads();
    try {
        std::ostringstream buf;
        buf.precision(17);
        if (*eq) {
            json arr = json::array();
            for (double a : parse_real_list(eq_grid, "--alpha-grid")) arr.push_back(equivalence_report(eq_lambda2, eq_nu2, a, eq_n));
            buf << arr.dump(2) << '\n';
        } else if (*sim) {
            const SimLayout layout = make_layout(sim_clusters, sim_size, sim_sizes, sim_design);
            Eigen::VectorXd xi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.p()));
            if (!sim_xi.empty()) {
                const auto v = parse_real_list(sim_xi, "--xi");
                if (v.size() != layout.p())
                    throw UsageError("--xi needs " + std::to_string(layout.p()) + " value(s) for design '" + sim_design + "'");
                xi = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
            }
            if (sim_model == "cs") {
                if (!sim_latent.empty()) throw UsageError("--latent is only available with --model extended");
                write_dataset(buf, simulate_cs(CSParams{xi, sim_lambda, sim_phi}, layout, Seed{seed}, threads));
            } else {
                const auto sample = simulate_extended(ExtendedSpec(sim_lambda2, sim_nu2, sim_alpha), xi, layout,
                                                      Seed{seed}, threads);
                write_dataset(buf, sample.data);
                if (!sim_latent.empty()) {
                    std::ostringstream side;
                    std::size_t widest = 0;
                    for (const auto& l : sample.latent) widest = std::max(widest, static_cast<std::size_t>(l.eps.size()));
                    side << "cluster,b";
                    for (std::size_t j = 1; j <= widest; ++j) side << ",eps" << j;
                    side << '\n';
                    for (std::size_t i = 0; i < sample.latent.size(); ++i) {
                        const auto& l = sample.latent[i];
                        side << sample.data.clusters()[i].id() << ',' << format_real(l.b);
                        for (std::size_t j = 0; j < widest; ++j) {
                            side << ',';
                            if (j < static_cast<std::size_t>(l.eps.size())) side << format_real(l.eps(static_cast<Eigen::Index>(j)));
                        }
                        side << '\n';
                    }
                    emit(sim_latent, side.str(), out);
                }
            }
        } else if (*fit) {
            buf << fit_to_json(fit_ml(read_dataset_file(data_path))).dump(2) << '\n';
        } else if (*eb) {
            const Dataset data = read_dataset_file(data_path);
            const FitResult f = fit_ml(data);
            json members = json::array();
            for (double a : parse_real_list(eb_grid, "--alpha-grid")) {
                const ExtendedSpec spec(f.params.lambda, f.params.phi, a);
                const auto [d, tau] = derive_d_tau(spec.lambda2(), spec.nu2(), a);
                const CSParams implied{f.params.xi, d + 2.0 * tau, spec.sigma2()};
                const auto preds = eb_predictions(data, f.params, a);
                json rows = json::array();
                for (std::size_t i = 0; i < preds.size(); ++i) {
                    const auto& c = data.clusters()[i];
                    rows.push_back({{"cluster", c.id()}, {"n", c.size()}, {"shrinkage", eb_shrinkage(spec, c.size())},
                                    {"prediction", preds[i]}});
                }
                members.push_back({{"alpha", a}, {"d", d}, {"tau", tau}, {"loglik", loglik_cs(data, implied)},
                                   {"predictions", rows}});
            }
            buf << json{{"fit", fit_to_json(f)}, {"members", members}}.dump(2) << '\n';
        } else if (*ht) {
            const WeibullExpSpec law(ht_phi, ht_rho, ht_delta);
            if (*ht_moments) {
                buf << moments_report(law, parse_k_range(ht_k)).dump(2) << '\n';
            } else if (*ht_sample) {
                write_lines(buf, we_sample(law, ht_n, Seed{seed}, threads));
            } else {
                buf << "n,running_mean\n";
                for (const auto& p : running_mean_trace(law, ht_n, ht_stride, Seed{seed}, threads))
                    buf << p.n << ',' << format_real(p.running_mean) << '\n';
            }
        } else if (*pit) {
            const WeibullExpSpec law(ht_phi, ht_rho, ht_delta);
            write_lines(buf, pit_sample([&](double u) { return we_quantile(law, u); }, ht_n, Seed{seed}, threads));
        }
        emit(out_path, buf.str(), out);
        return 0;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace unobs_cli
