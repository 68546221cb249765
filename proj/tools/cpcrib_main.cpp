#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cpcrib/analysis.hpp"
#include "cpcrib/closed_forms.hpp"
#include "cpcrib/io.hpp"

using namespace cpcrib;

namespace {

std::vector<Index> parse_dims(const std::string& s) {
    std::vector<Index> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoll(tok));
    if (out.empty()) throw CLI::ValidationError("expected a comma-separated list");
    return out;
}

std::vector<double> parse_reals(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

// "n:r", 1-based on the command line.
std::pair<Index, Index> parse_target(const std::string& s) {
    auto pos = s.find(':');
    if (pos == std::string::npos) throw CLI::ValidationError("target must look like n:r");
    Index n = std::stoll(s.substr(0, pos)), r = std::stoll(s.substr(pos + 1));
    if (n < 1 || r < 1) throw CLI::ValidationError("target indices are 1-based");
    return {n - 1, r - 1};
}

CribMethod parse_method(const std::string& s) {
    if (s == "oracle") return CribMethod::oracle;
    if (s == "general") return CribMethod::general;
    if (s == "fast") return CribMethod::fast;
    if (s == "auto") return CribMethod::auto_select;
    throw CLI::ValidationError("method must be oracle|general|fast|auto");
}

void emit(json j, const std::string& out_path, bool reproducible) {
    if (!reproducible) {
        auto now = std::chrono::system_clock::now().time_since_epoch();
        j["timestamp"] = std::chrono::duration_cast<std::chrono::seconds>(now).count();
    }
    save_json(j, out_path);
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::string>& rows) {
    std::ostream* os = &std::cout;
    std::ofstream f;
    if (!path.empty()) {
        f.open(path);
        if (!f) throw std::invalid_argument("cannot write file: " + path);
        os = &f;
    }
    *os << header << "\n";
    for (const auto& r : rows) *os << r << "\n";
}

void dump_matrix_csv(const MatrixXd& M, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::invalid_argument("cannot write file: " + path);
    for (Index i = 0; i < M.rows(); ++i) {
        for (Index j = 0; j < M.cols(); ++j) f << (j ? "," : "") << M(i, j);
        f << "\n";
    }
}

int run(int argc, char** argv) {
    CLI::App app{"Cramer-Rao induced bounds for CP tensor decomposition"};
    app.require_subcommand(1);
    app.fallthrough();  // let subcommands use the global -o/--format/--reproducible flags
    std::string out_path, format = "json";
    bool reproducible = false;
    app.add_option("-o,--output", out_path, "output file (default stdout)")->capture_default_str();
    app.add_option("--format", format, "json or csv")->capture_default_str();
    app.add_flag("--reproducible", reproducible, "suppress the timestamp field");

    // crib
    auto* crib_cmd = app.add_subcommand("crib", "bound for one factor column (or all)");
    std::string factors_path, target = "1:1", method_str = "auto", mask_path, dump_hessian;
    double sigma2 = 1.0, epsilon = 1e-5;
    bool all_columns = false;
    crib_cmd->add_option("--factors", factors_path, "Kruskal model JSON")->required();
    crib_cmd->add_option("--sigma2", sigma2, "noise variance")->capture_default_str();
    crib_cmd->add_option("--target", target, "mode:column, 1-based")->capture_default_str();
    crib_cmd->add_option("--method", method_str, "oracle|general|fast|auto")->capture_default_str();
    crib_cmd->add_option("--epsilon", epsilon, "gram regularization magnitude")->capture_default_str();
    crib_cmd->add_option("--mask", mask_path, "0-1 indicator tensor JSON");
    crib_cmd->add_option("--dump-hessian", dump_hessian, "write the dense Hessian to CSV");
    crib_cmd->add_flag("--all", all_columns, "report every (mode, column)");

    // closed-form
    auto* cf_cmd = app.add_subcommand("closed-form", "closed-form bounds");
    std::string cf_case;
    Index cf_i1 = 3;
    std::string cf_c, cf_gammas;
    double cf_sigma2 = 1.0, cf_norm = 1.0, cf_c2 = 0, cf_c3 = 0, cf_c4 = 0;
    cf_cmd->add_option("--case", cf_case, "rank1|rank2|ortho|brie")->required();
    cf_cmd->add_option("--i1", cf_i1, "I_1")->capture_default_str();
    cf_cmd->add_option("--c", cf_c, "correlations c_1,..,c_N (rank2)");
    cf_cmd->add_option("--gammas", cf_gammas, "gamma_2,..,gamma_R (ortho)");
    cf_cmd->add_option("--c2", cf_c2, "Brie c_2");
    cf_cmd->add_option("--c3", cf_c3, "Brie c_3");
    cf_cmd->add_option("--c4", cf_c4, "Brie c_4");
    cf_cmd->add_option("--sigma2", cf_sigma2)->capture_default_str();
    cf_cmd->add_option("--norm-a1", cf_norm)->capture_default_str();

    // decompose
    auto* dec_cmd = app.add_subcommand("decompose", "fit a CP model");
    std::string tensor_path, dec_mask_path, truth_path, algo = "gn";
    Index dec_rank = 1;
    std::uint64_t seed = 0;
    dec_cmd->add_option("--tensor", tensor_path, "dense tensor JSON")->required();
    dec_cmd->add_option("--rank", dec_rank, "CP rank")->required();
    dec_cmd->add_option("--mask", dec_mask_path, "0-1 indicator tensor JSON");
    dec_cmd->add_option("--algo", algo, "gn or als")->capture_default_str();
    dec_cmd->add_option("--seed", seed)->capture_default_str();
    dec_cmd->add_option("--truth", truth_path, "ground-truth model for angular errors");

    // mc
    auto* mc_cmd = app.add_subcommand("mc", "Monte Carlo bound validation");
    std::string mc_factors;
    double mc_sigma2 = 0.0, mc_snr_db = 40.0, mc_missing = 0.0;
    int mc_trials = 200;
    std::uint64_t mc_seed = 0;
    mc_cmd->add_option("--factors", mc_factors, "ground-truth model JSON")->required();
    mc_cmd->add_option("--sigma2", mc_sigma2, "noise variance (overrides --snr-db)");
    mc_cmd->add_option("--snr-db", mc_snr_db)->capture_default_str();
    mc_cmd->add_option("--trials", mc_trials)->capture_default_str();
    mc_cmd->add_option("--missing-rate", mc_missing, "fraction of hidden entries");
    mc_cmd->add_option("--seed", mc_seed)->capture_default_str();

    // reshape-loss
    auto* rl_cmd = app.add_subcommand("reshape-loss", "accuracy cost of merging modes");
    std::string rl_factors, rl_merge = "3,4", rl_c;
    Index rl_i1 = 5;
    std::uint64_t rl_seed = 0;
    rl_cmd->add_option("--factors", rl_factors, "model JSON (or use --c for a rank-2 scenario)");
    rl_cmd->add_option("--c", rl_c, "rank-2 correlations c_1,..,c_N");
    rl_cmd->add_option("--i1", rl_i1, "I_1 for the rank-2 scenario")->capture_default_str();
    rl_cmd->add_option("--merge", rl_merge, "modes to merge, 1-based")->capture_default_str();
    rl_cmd->add_option("--seed", rl_seed)->capture_default_str();

    // stable-rank
    auto* sr_cmd = app.add_subcommand("stable-rank", "maximum stable rank bound");
    std::string sr_dims;
    bool sr_verify = false;
    int sr_seeds = 5;
    sr_cmd->add_option("--dims", sr_dims, "tensor dimensions, comma-separated")->required();
    sr_cmd->add_flag("--verify", sr_verify, "check finiteness at the bound and just above");
    sr_cmd->add_option("--seeds", sr_seeds, "random models per verification")->capture_default_str();

    // gen
    auto* gen_cmd = app.add_subcommand("gen", "generate a random normalized model");
    std::string gen_dims, gen_corr;
    Index gen_rank = 1;
    std::uint64_t gen_seed = 0;
    gen_cmd->add_option("--dims", gen_dims)->required();
    gen_cmd->add_option("--rank", gen_rank)->required();
    gen_cmd->add_option("--correlations", gen_corr, "per-mode column correlation targets");
    gen_cmd->add_option("--seed", gen_seed)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    if (crib_cmd->parsed()) {
        KruskalModel m = model_from_json(load_json(factors_path));
        std::optional<DenseTensor> mask;
        if (!mask_path.empty()) mask = tensor_from_json(load_json(mask_path));
        if (!dump_hessian.empty()) {
            MatrixXd H = mask ? masked_hessian(normalize(m), *mask).H
                              : build_hessian(gram_cache(normalize(m)), normalize(m)).H;
            dump_matrix_csv(H, dump_hessian);
        }
        if (all_columns) {
            std::vector<std::string> rows;
            json arr = json::array();
            for (Index n = 0; n < m.order(); ++n)
                for (Index r = 0; r < m.rank(); ++r) {
                    CribReport rep = mask ? crib_masked(m, *mask, n, r, sigma2)
                                          : compute_crib({m, n, r, sigma2,
                                                          parse_method(method_str), epsilon});
                    json jr = report_to_json(rep);
                    jr["mode"] = n + 1;
                    jr["column"] = r + 1;
                    arr.push_back(jr);
                    std::ostringstream line;
                    line << n + 1 << "," << r + 1 << ","
                         << (rep.finite ? std::to_string(rep.crib) : "inf") << ","
                         << (rep.finite ? std::to_string(rep.crib_db) : "-inf");
                    rows.push_back(line.str());
                }
            if (format == "csv") write_csv(out_path, "mode,column,crib,crib_db", rows);
            else emit(json{{"reports", arr}}, out_path, reproducible);
        } else {
            auto [n, r] = parse_target(target);
            CribReport rep = mask ? crib_masked(m, *mask, n, r, sigma2)
                                  : compute_crib({m, n, r, sigma2, parse_method(method_str),
                                                  epsilon});
            emit(report_to_json(rep), out_path, reproducible);
        }
        return 0;
    }

    if (cf_cmd->parsed()) {
        double value;
        if (cf_case == "rank1") {
            value = crib_rank1(cf_i1, cf_sigma2, cf_norm);
        } else if (cf_case == "rank2") {
            Rank2Params p{cf_i1, parse_reals(cf_c), cf_sigma2, cf_norm};
            value = crib_rank2(p);
        } else if (cf_case == "ortho") {
            OrthoCaseParams p{cf_i1, parse_reals(cf_gammas), cf_sigma2, cf_norm};
            value = crib_ortho(p);
        } else if (cf_case == "brie") {
            value = brie_crib({cf_i1, cf_c2, cf_c3, cf_c4, cf_sigma2, cf_norm});
        } else {
            throw CLI::ValidationError("case must be rank1|rank2|ortho|brie");
        }
        CribReport rep;
        rep.finite = std::isfinite(value);
        rep.crib = value;
        auto [db, deg] = db_and_angle(value);
        rep.crib_db = db;
        rep.angle_deg = deg;
        rep.method = CribMethod::general;
        json j = report_to_json(rep);
        j["case"] = cf_case;
        j.erase("method");
        j.erase("epsilon_applied");
        emit(j, out_path, reproducible);
        return 0;
    }

    if (dec_cmd->parsed()) {
        DenseTensor t = tensor_from_json(load_json(tensor_path));
        std::optional<DenseTensor> mask;
        if (!dec_mask_path.empty()) mask = tensor_from_json(load_json(dec_mask_path));
        SolverConfig cfg;
        cfg.seed = seed;
        FitResult fit = algo == "als" ? fit_als(t, dec_rank, cfg, mask ? &*mask : nullptr)
                                      : fit_gn(t, dec_rank, cfg, mask ? &*mask : nullptr);
        json j = fit_to_json(fit);
        if (!truth_path.empty()) {
            KruskalModel truth = model_from_json(load_json(truth_path));
            KruskalModel aligned = align(fit.model, truth);
            AngularError err = angular_errors(aligned, truth);
            json angles = json::array();
            for (Index n = 0; n < err.angles.rows(); ++n)
                for (Index r = 0; r < err.angles.cols(); ++r)
                    angles.push_back({{"mode", n + 1}, {"column", r + 1},
                                      {"angle_rad", err.angles(n, r)},
                                      {"dsr", err.dsr(n, r)}});
            j["angular_errors"] = angles;
        }
        emit(j, out_path, reproducible);
        return 0;
    }

    if (mc_cmd->parsed()) {
        McConfig cfg;
        cfg.model = model_from_json(load_json(mc_factors));
        cfg.sigma2 = mc_sigma2 > 0 ? mc_sigma2 : sigma2_for_snr_db(cfg.model, mc_snr_db);
        cfg.trials = mc_trials;
        cfg.seed = mc_seed;
        if (mc_missing > 0) cfg.missing_rate = mc_missing;
        McResult res = monte_carlo(cfg);
        json arr = json::array();
        std::vector<std::string> rows;
        for (Index n = 0; n < res.msae.rows(); ++n)
            for (Index r = 0; r < res.msae.cols(); ++r) {
                arr.push_back({{"mode", n + 1}, {"column", r + 1},
                               {"msae_db", res.msae_db(n, r)}, {"crib_db", res.crib_db(n, r)}});
                std::ostringstream line;
                line << n + 1 << "," << r + 1 << "," << res.crib_db(n, r) << ","
                     << res.msae_db(n, r);
                rows.push_back(line.str());
            }
        if (format == "csv") {
            write_csv(out_path, "mode,column,crib_db,msae_db", rows);
        } else {
            emit(json{{"sigma2", cfg.sigma2}, {"trials_used", res.trials_used},
                      {"failures", res.failures}, {"columns", arr}},
                 out_path, reproducible);
        }
        return 0;
    }

    if (rl_cmd->parsed()) {
        KruskalModel m;
        if (!rl_factors.empty()) {
            m = model_from_json(load_json(rl_factors));
        } else if (!rl_c.empty()) {
            std::vector<double> c = parse_reals(rl_c);
            std::vector<Index> dims(c.size(), 2);
            dims[0] = rl_i1;
            m = model_with_correlations(dims, 2, c, rl_seed);
        } else {
            throw CLI::ValidationError("reshape-loss needs --factors or --c");
        }
        std::vector<Index> merge;
        for (Index v : parse_dims(rl_merge)) merge.push_back(v - 1);
        ReshapeLoss rl = reshape_loss(m, merge);
        double loss = std::round(rl.loss_db * 1e4) / 1e4;
        if (loss == 0.0) loss = 0.0;  // normalize -0.0
        emit(json{{"crib_db_original", rl.original.crib_db},
                  {"crib_db_reshaped", rl.reshaped.crib_db},
                  {"loss_db", loss}},
             out_path, reproducible);
        return 0;
    }

    if (sr_cmd->parsed()) {
        std::vector<Index> dims = parse_dims(sr_dims);
        Index bound = max_stable_rank_bound(dims);
        json j{{"dims", dims}, {"bound", bound}};
        if (sr_verify) {
            int finite_at_bound = 0, finite_above = 0;
            for (int s = 0; s < sr_seeds; ++s) {
                if (check_stability(dims, bound, 1000 + s).finite) ++finite_at_bound;
                if (check_stability(dims, bound + 1, 2000 + s).finite) ++finite_above;
            }
            j["finite_at_bound"] = finite_at_bound;
            j["finite_above_bound"] = finite_above;
            j["seeds"] = sr_seeds;
        }
        emit(j, out_path, reproducible);
        return 0;
    }

    if (gen_cmd->parsed()) {
        std::vector<Index> dims = parse_dims(gen_dims);
        KruskalModel m;
        json j;
        if (!gen_corr.empty()) {
            std::vector<double> c = parse_reals(gen_corr);
            m = model_with_correlations(dims, gen_rank, c, gen_seed);
            GramCache g = gram_cache(m);
            json achieved = json::array();
            for (Index n = 0; n < m.order(); ++n)
                achieved.push_back(g.C[n](0, std::min<Index>(1, m.rank() - 1)));
            j["achieved_correlations"] = achieved;
        } else {
            m = random_model(dims, gen_rank, gen_seed);
        }
        j["model"] = model_to_json(m);
        emit(j, out_path, reproducible);
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed JSON: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::runtime_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    }
}
