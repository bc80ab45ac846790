// Command-line front end: every computation in the library behind one
// binary, with JSON config input, CSV/JSON outputs, and a reproducibility
// manifest written alongside every run.
//
// Exit codes: 0 success, 1 usage error (bad flags or config), 2 computation
// failure, 3 oracle-check comparison failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "twinspin/bec.hpp"
#include "twinspin/charfunc.hpp"
#include "twinspin/correlators.hpp"
#include "twinspin/epr.hpp"
#include "twinspin/io.hpp"
#include "twinspin/model.hpp"
#include "twinspin/oracle.hpp"
#include "twinspin/trajectories.hpp"

namespace {

namespace ts = twinspin;
namespace orc = twinspin::oracle;
namespace fs = std::filesystem;
using nlohmann::json;
using ts::Complex;

// Configuration problems are usage errors (exit 1), distinct from failures
// inside the computation itself (exit 2).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonOptions {
    std::string config_path;
    std::string out_dir{"."};
    std::uint64_t seed{20240815};
    int threads{1};
};

json load_config(const CommonOptions& opt) {
    if (opt.config_path.empty()) return json::object();
    std::ifstream in(opt.config_path);
    if (!in) throw UsageError("cannot read config file: " + opt.config_path);
    json cfg;
    try {
        in >> cfg;
    } catch (const json::parse_error& e) {
        throw UsageError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!cfg.is_object()) throw UsageError("config root must be a JSON object");
    return cfg;
}

double number_or(const json& cfg, const char* key, double fallback) {
    if (!cfg.contains(key)) return fallback;
    if (!cfg.at(key).is_number())
        throw UsageError(std::string("config key must be a number: ") + key);
    return cfg.at(key).get<double>();
}

long long integer_or(const json& cfg, const char* key, long long fallback) {
    if (!cfg.contains(key)) return fallback;
    if (!cfg.at(key).is_number_integer())
        throw UsageError(std::string("config key must be an integer: ") + key);
    return cfg.at(key).get<long long>();
}

// Model parameters shared by the spin-model commands; defaults differ per
// command and unspecified halves mirror the given ones (n_b <- n_a,
// chi_ab <- chi, gamma1 <- gamma0).
ts::ModelParams model_from_config(const json& cfg, int default_n, double default_chi,
                                  double default_gamma) {
    ts::ModelParams par;
    par.n_a = static_cast<int>(integer_or(cfg, "n_a", default_n));
    par.n_b = static_cast<int>(integer_or(cfg, "n_b", par.n_a));
    par.chi = number_or(cfg, "chi", default_chi);
    par.chi_ab = number_or(cfg, "chi_ab", par.chi);
    par.gamma0 = number_or(cfg, "gamma0", default_gamma);
    par.gamma1 = number_or(cfg, "gamma1", par.gamma0);
    try {
        ts::validate(par);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    return par;
}

json model_to_json(const ts::ModelParams& par) {
    return json{{"n_a", par.n_a},       {"n_b", par.n_b},       {"chi", par.chi},
                {"chi_ab", par.chi_ab}, {"gamma0", par.gamma0}, {"gamma1", par.gamma1}};
}

void write_manifest(const CommonOptions& opt, const std::string& command,
                    const json& inputs, const std::vector<std::string>& outputs) {
    json manifest;
    manifest["command"] = command;
    manifest["version"] = ts::kVersionString;
    manifest["inputs"] = inputs;
    manifest["seed"] = opt.seed;
    manifest["threads"] = opt.threads;
    manifest["outputs"] = outputs;
    const fs::path path = fs::path(opt.out_dir) / "manifest.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << manifest.dump(2) << "\n";
}

// The 25 time-dependent moments, in the order they appear in CorrelatorSet.
struct CorrelatorField {
    const char* name;
    double ts::CorrelatorSet::* member;
    ts::McMoment ts::McEstimators::* estimator;
};

constexpr std::array<CorrelatorField, 25> kCorrelatorFields = {{
    {"sx_a", &ts::CorrelatorSet::sx_a, &ts::McEstimators::sx_a},
    {"sy_a", &ts::CorrelatorSet::sy_a, &ts::McEstimators::sy_a},
    {"sz_a", &ts::CorrelatorSet::sz_a, &ts::McEstimators::sz_a},
    {"n_of_t", &ts::CorrelatorSet::n_of_t, &ts::McEstimators::n_of_t},
    {"sx2_a", &ts::CorrelatorSet::sx2_a, &ts::McEstimators::sx2_a},
    {"sy2_a", &ts::CorrelatorSet::sy2_a, &ts::McEstimators::sy2_a},
    {"sz2_a", &ts::CorrelatorSet::sz2_a, &ts::McEstimators::sz2_a},
    {"anti_yz_a", &ts::CorrelatorSet::anti_yz_a, &ts::McEstimators::anti_yz_a},
    {"anti_xy_a", &ts::CorrelatorSet::anti_xy_a, &ts::McEstimators::anti_xy_a},
    {"sx_b", &ts::CorrelatorSet::sx_b, &ts::McEstimators::sx_b},
    {"sy_b", &ts::CorrelatorSet::sy_b, &ts::McEstimators::sy_b},
    {"sz_b", &ts::CorrelatorSet::sz_b, &ts::McEstimators::sz_b},
    {"n_of_t_b", &ts::CorrelatorSet::n_of_t_b, &ts::McEstimators::n_of_t_b},
    {"sx2_b", &ts::CorrelatorSet::sx2_b, &ts::McEstimators::sx2_b},
    {"sy2_b", &ts::CorrelatorSet::sy2_b, &ts::McEstimators::sy2_b},
    {"sz2_b", &ts::CorrelatorSet::sz2_b, &ts::McEstimators::sz2_b},
    {"anti_yz_b", &ts::CorrelatorSet::anti_yz_b, &ts::McEstimators::anti_yz_b},
    {"anti_xy_b", &ts::CorrelatorSet::anti_xy_b, &ts::McEstimators::anti_xy_b},
    {"sysy_ab", &ts::CorrelatorSet::sysy_ab, &ts::McEstimators::sysy_ab},
    {"sysz_ab", &ts::CorrelatorSet::sysz_ab, &ts::McEstimators::sysz_ab},
    {"szsy_ab", &ts::CorrelatorSet::szsy_ab, &ts::McEstimators::szsy_ab},
    {"szsz_ab", &ts::CorrelatorSet::szsz_ab, &ts::McEstimators::szsz_ab},
    {"sxsx_ab", &ts::CorrelatorSet::sxsx_ab, &ts::McEstimators::sxsx_ab},
    {"sxsy_ab", &ts::CorrelatorSet::sxsy_ab, &ts::McEstimators::sxsy_ab},
    {"sysx_ab", &ts::CorrelatorSet::sysx_ab, &ts::McEstimators::sysx_ab},
}};

// ---------------------------------------------------------------------------
// correlators: every first and second spin moment on a linear time grid.

int cmd_correlators(const json& cfg, const CommonOptions& opt) {
    const ts::ModelParams par = model_from_config(cfg, 10, 1.0, 0.01);
    const double default_t_max = par.chi_ab > 0.0 ? 2.0 * ts::kPi / par.chi_ab : 1.0;
    const double t_max = number_or(cfg, "t_max", default_t_max);
    const long long n_times = integer_or(cfg, "n_times", 256);
    if (!(t_max > 0.0)) throw UsageError("t_max must be > 0");
    if (n_times < 2) throw UsageError("n_times must be >= 2");

    ts::CsvWriter csv(fs::path(opt.out_dir) / "correlators.csv");
    std::vector<std::string> row{"t", "chi_ab_t"};
    for (const auto& field : kCorrelatorFields) row.push_back(field.name);
    csv.write_row(row);
    for (long long i = 0; i < n_times; ++i) {
        const double t = t_max * static_cast<double>(i) / static_cast<double>(n_times - 1);
        const ts::CorrelatorSet set = ts::correlator_set(par, t);
        row.clear();
        row.push_back(ts::format_full(t));
        row.push_back(ts::format_full(par.chi_ab * t));
        for (const auto& field : kCorrelatorFields)
            row.push_back(ts::format_full(set.*(field.member)));
        csv.write_row(row);
    }

    json inputs = model_to_json(par);
    inputs["t_max"] = t_max;
    inputs["n_times"] = n_times;
    write_manifest(opt, "correlators", inputs, {"correlators.csv"});
    return 0;
}

// ---------------------------------------------------------------------------
// entropy: linear entropy of ensemble a against time, one column per decay
// rate (applied to both internal states).

int cmd_entropy(const json& cfg, const CommonOptions& opt) {
    ts::ModelParams par = model_from_config(cfg, 10, 1.0, 0.0);
    if (par.n_a > 200)
        throw UsageError("entropy supports n_a <= 200 (reduced-density size)");
    std::vector<double> gammas{0.0, 0.01};
    if (cfg.contains("gammas")) {
        if (!cfg.at("gammas").is_array() || cfg.at("gammas").empty())
            throw UsageError("gammas must be a non-empty array of numbers");
        gammas.clear();
        for (const json& g : cfg.at("gammas")) {
            if (!g.is_number()) throw UsageError("gammas entries must be numbers");
            gammas.push_back(g.get<double>());
            if (gammas.back() < 0.0) throw UsageError("gammas entries must be >= 0");
        }
    }
    const double default_t_max = par.chi_ab > 0.0 ? 2.0 * ts::kPi / par.chi_ab : 1.0;
    const double t_max = number_or(cfg, "t_max", default_t_max);
    const long long n_times = integer_or(cfg, "n_times", 512);
    if (!(t_max > 0.0)) throw UsageError("t_max must be > 0");
    if (n_times < 2) throw UsageError("n_times must be >= 2");

    ts::CsvWriter csv(fs::path(opt.out_dir) / "entropy.csv");
    std::vector<std::string> row{"t", "chi_ab_t"};
    for (double g : gammas) {
        char label[48];
        std::snprintf(label, sizeof(label), "s_lin_gamma_%g", g);
        row.push_back(label);
    }
    csv.write_row(row);
    for (long long i = 0; i < n_times; ++i) {
        const double t = t_max * static_cast<double>(i) / static_cast<double>(n_times - 1);
        row.clear();
        row.push_back(ts::format_full(t));
        row.push_back(ts::format_full(par.chi_ab * t));
        for (double g : gammas) {
            ts::ModelParams lossy = par;
            lossy.gamma0 = g;
            lossy.gamma1 = g;
            row.push_back(ts::format_full(ts::linear_entropy(lossy, t)));
        }
        csv.write_row(row);
    }

    json inputs = model_to_json(par);
    inputs.erase("gamma0");
    inputs.erase("gamma1");
    inputs["gammas"] = gammas;
    inputs["t_max"] = t_max;
    inputs["n_times"] = n_times;
    write_manifest(opt, "entropy", inputs, {"entropy.csv"});
    return 0;
}

// ---------------------------------------------------------------------------
// epr-scan: steering parameter against time at fixed measurement angles, one
// lossy and one lossless column per atom number.  Undefined points (degenerate
// commutator denominator) are emitted as empty fields.

int cmd_epr_scan(const json& cfg, const CommonOptions& opt) {
    const double chi = number_or(cfg, "chi", 0.0);
    const double chi_ab = number_or(cfg, "chi_ab", 1.0);
    if (!(chi_ab > 0.0))
        throw UsageError("epr-scan requires chi_ab > 0 (times scan in units of 1/chi_ab)");
    const double gamma = number_or(cfg, "gamma", chi_ab);
    if (gamma < 0.0) throw UsageError("gamma must be >= 0");
    const double alpha = number_or(cfg, "alpha", 0.0);
    const double beta = number_or(cfg, "beta", 0.0);
    std::vector<long long> n_list{100, 1000, 10000, 50000};
    if (cfg.contains("n_list")) {
        if (!cfg.at("n_list").is_array() || cfg.at("n_list").empty())
            throw UsageError("n_list must be a non-empty array of integers");
        n_list.clear();
        for (const json& n : cfg.at("n_list")) {
            if (!n.is_number_integer() || n.get<long long>() < 1)
                throw UsageError("n_list entries must be integers >= 1");
            n_list.push_back(n.get<long long>());
        }
    }
    const double u_min = number_or(cfg, "u_min", 1e-4);
    const double u_max = number_or(cfg, "u_max", 2.0);
    const long long n_times = integer_or(cfg, "n_times", 400);
    if (!(u_min > 0.0) || !(u_max > u_min)) throw UsageError("need 0 < u_min < u_max");
    if (n_times < 2) throw UsageError("n_times must be >= 2");

    ts::CsvWriter csv(fs::path(opt.out_dir) / "epr_scan.csv");
    std::vector<std::string> row{"t", "chi_ab_t"};
    for (long long n : n_list) {
        row.push_back("e2_n" + std::to_string(n));
        row.push_back("e2_lossless_n" + std::to_string(n));
    }
    csv.write_row(row);
    const auto field_for = [&](const ts::ModelParams& par, double t) {
        const std::optional<double> e2 = ts::epr_value(par, t, alpha, beta);
        return e2 ? ts::format_full(*e2) : std::string();
    };
    for (long long i = 0; i < n_times; ++i) {
        const double u = u_min * std::pow(u_max / u_min,
                                          static_cast<double>(i) /
                                              static_cast<double>(n_times - 1));
        const double t = u / chi_ab;
        row.clear();
        row.push_back(ts::format_full(t));
        row.push_back(ts::format_full(u));
        for (long long n : n_list) {
            ts::ModelParams par;
            par.n_a = static_cast<int>(n);
            par.n_b = static_cast<int>(n);
            par.chi = chi;
            par.chi_ab = chi_ab;
            par.gamma0 = gamma;
            par.gamma1 = gamma;
            row.push_back(field_for(par, t));
            par.gamma0 = 0.0;
            par.gamma1 = 0.0;
            row.push_back(field_for(par, t));
        }
        csv.write_row(row);
    }

    json inputs{{"chi", chi},     {"chi_ab", chi_ab}, {"gamma", gamma},
                {"alpha", alpha}, {"beta", beta},     {"n_list", n_list},
                {"u_min", u_min}, {"u_max", u_max},   {"n_times", n_times}};
    write_manifest(opt, "epr-scan", inputs, {"epr_scan.csv"});
    return 0;
}

// ---------------------------------------------------------------------------
// husimi: four phase-space grids — (a) the lossless state, (b) the one-loss
// density block of one channel, (c)/(d) single trajectories whose loss
// happened at two different times.

ts::JumpChannel channel_from_string(const std::string& name) {
    if (name == "a0") return ts::JumpChannel::a0;
    if (name == "a1") return ts::JumpChannel::a1;
    if (name == "b0") return ts::JumpChannel::b0;
    if (name == "b1") return ts::JumpChannel::b1;
    throw UsageError("channel must be one of a0, a1, b0, b1");
}

void write_husimi_csv(const fs::path& path, const ts::HusimiGrid& grid) {
    ts::CsvWriter csv(path);
    csv.write_row({"phi_a", "phi_b", "q"});
    for (int i = 0; i < grid.rows(); ++i)
        for (int j = 0; j < grid.cols(); ++j)
            csv.write_row({ts::format_full(grid.phi_a[static_cast<std::size_t>(i)]),
                           ts::format_full(grid.phi_b[static_cast<std::size_t>(j)]),
                           ts::format_full(grid.value(i, j))});
}

void write_zero_husimi_csv(const fs::path& path, int resolution) {
    ts::CsvWriter csv(path);
    csv.write_row({"phi_a", "phi_b", "q"});
    const std::vector<double> axis = ts::husimi_axis(resolution);
    for (double pa : axis)
        for (double pb : axis)
            csv.write_row({ts::format_full(pa), ts::format_full(pb), ts::format_full(0.0)});
}

int cmd_husimi(const json& cfg, const CommonOptions& opt) {
    const int n = static_cast<int>(integer_or(cfg, "n", 10));
    if (n < 1 || n > 40) throw UsageError("husimi supports 1 <= n <= 40");
    const double chi = number_or(cfg, "chi", 1.0);
    const double chi_ab = number_or(cfg, "chi_ab", chi);
    const double gamma = number_or(cfg, "gamma", 0.01 * chi);
    if (gamma < 0.0) throw UsageError("gamma must be >= 0");
    const int resolution = static_cast<int>(integer_or(cfg, "resolution", 64));
    if (resolution < 16) throw UsageError("resolution must be >= 16");
    const double period_quarter = chi_ab > 0.0 ? 0.25 * ts::kPi / chi_ab : 0.25 * ts::kPi;
    const double t = number_or(cfg, "t", 4.0 * period_quarter);
    const double t1_c = number_or(cfg, "t1_c", period_quarter);
    const double t1_d = number_or(cfg, "t1_d", 3.0 * period_quarter);
    if (!(t > 0.0)) throw UsageError("t must be > 0");
    if (t1_c < 0.0 || t1_c > t || t1_d < 0.0 || t1_d > t)
        throw UsageError("loss times t1_c, t1_d must lie in [0, t]");
    const std::string channel_name =
        cfg.contains("channel") ? cfg.at("channel").get<std::string>() : std::string("a0");
    const ts::JumpChannel channel = channel_from_string(channel_name);

    ts::ModelParams par;
    par.n_a = n;
    par.n_b = n;
    par.chi = chi;
    par.chi_ab = chi_ab;
    par.gamma0 = gamma;
    par.gamma1 = gamma;

    // Panel (a): the lossless state at t.
    ts::ModelParams lossless = par;
    lossless.gamma0 = 0.0;
    lossless.gamma1 = 0.0;
    const ts::SectorState ideal =
        ts::no_jump_evolve(lossless, ts::initial_sector_state(n, n), t);
    write_husimi_csv(fs::path(opt.out_dir) / "husimi_panel_a.csv",
                     ts::husimi_q(ideal, resolution, resolution));

    // Panel (b): the one-loss density block of the selected channel,
    // subnormalised by the one-loss probability mass (zero without losses).
    const Eigen::MatrixXcd block = ts::single_loss_block(par, channel, t);
    const bool a_side = channel == ts::JumpChannel::a0 || channel == ts::JumpChannel::a1;
    const int block_n_a = a_side ? n - 1 : n;
    const int block_n_b = a_side ? n : n - 1;
    write_husimi_csv(fs::path(opt.out_dir) / "husimi_panel_b.csv",
                     ts::husimi_q(block, block_n_a, block_n_b, resolution, resolution));

    // Panels (c) and (d): single trajectories with one loss at t1, shown as
    // normalised conditional states.
    const auto trajectory_panel = [&](const fs::path& path, double t1) {
        if (ts::channel_rate(par, channel) == 0.0) {
            write_zero_husimi_csv(path, resolution);  // loss cannot occur
            return;
        }
        const ts::SectorState branch =
            ts::normalized_copy(ts::trajectory_given_loss_time(par, channel, t, t1));
        write_husimi_csv(path, ts::husimi_q(branch, resolution, resolution));
    };
    trajectory_panel(fs::path(opt.out_dir) / "husimi_panel_c.csv", t1_c);
    trajectory_panel(fs::path(opt.out_dir) / "husimi_panel_d.csv", t1_d);

    json inputs{{"n", n},           {"chi", chi},   {"chi_ab", chi_ab},
                {"gamma", gamma},   {"t", t},       {"t1_c", t1_c},
                {"t1_d", t1_d},     {"channel", channel_name},
                {"resolution", resolution}};
    write_manifest(opt, "husimi", inputs,
                   {"husimi_panel_a.csv", "husimi_panel_b.csv", "husimi_panel_c.csv",
                    "husimi_panel_d.csv"});
    return 0;
}

// ---------------------------------------------------------------------------
// trajectories: Monte Carlo estimators of every moment with standard errors.

int cmd_trajectories(const json& cfg, const CommonOptions& opt) {
    const ts::ModelParams par = model_from_config(cfg, 6, 1.0, 0.01);
    const double t = number_or(cfg, "t", 1.0);
    const long long n_trajectories = integer_or(cfg, "n_trajectories", 10000);
    if (!(t >= 0.0)) throw UsageError("t must be >= 0");
    if (n_trajectories < 1) throw UsageError("n_trajectories must be >= 1");

    const ts::McEstimators est =
        ts::mc_evolve(par, t, n_trajectories, opt.seed, opt.threads);

    json moments;
    for (const auto& field : kCorrelatorFields) {
        const ts::McMoment& m = est.*(field.estimator);
        moments[field.name] = json{{"mean", m.mean}, {"std_error", m.std_error}};
    }
    moments["prob_one_loss"] = json{{"mean", est.prob_one_loss.mean},
                                    {"std_error", est.prob_one_loss.std_error}};
    json out;
    out["t"] = est.t;
    out["n_trajectories"] = est.n_trajectories;
    out["seed"] = opt.seed;
    out["threads"] = opt.threads;
    out["estimators"] = moments;
    const fs::path path = fs::path(opt.out_dir) / "estimators.json";
    std::ofstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open for writing: " + path.string());
    file << out.dump(2) << "\n";

    json inputs = model_to_json(par);
    inputs["t"] = t;
    inputs["n_trajectories"] = n_trajectories;
    write_manifest(opt, "trajectories", inputs, {"estimators.json"});
    return 0;
}

// ---------------------------------------------------------------------------
// bec-sweep: minimum steering parameter against atom number for a trapped
// condensate, one CSV per (trap frequency, loss model) pair.

ts::LossModel loss_model_from_string(const std::string& name) {
    if (name == "none") return ts::LossModel::none;
    if (name == "one_body") return ts::LossModel::one_body;
    if (name == "full") return ts::LossModel::full;
    throw UsageError("loss model must be one of none, one_body, full");
}

int cmd_bec_sweep(const json& cfg, const CommonOptions& opt) {
    const double a_bohr = number_or(cfg, "a_bohr", 100.0);
    const double a01_bohr = number_or(cfg, "a01_bohr", 100.0);
    const double mass_amu = number_or(cfg, "mass_amu", 87.0);
    const double k1 = number_or(cfg, "k1", 0.5);
    const double k2 = number_or(cfg, "k2", 8e-20);
    const double k3 = number_or(cfg, "k3", 6e-42);
    std::vector<double> frequencies{200.0, 1000.0};
    if (cfg.contains("omega_hz")) frequencies = {number_or(cfg, "omega_hz", 0.0)};
    std::vector<std::string> models{"none", "one_body", "full"};
    if (cfg.contains("loss_models")) {
        if (!cfg.at("loss_models").is_array() || cfg.at("loss_models").empty())
            throw UsageError("loss_models must be a non-empty array of strings");
        models.clear();
        for (const json& m : cfg.at("loss_models")) {
            if (!m.is_string()) throw UsageError("loss_models entries must be strings");
            models.push_back(m.get<std::string>());
        }
    }
    const long long n_min = integer_or(cfg, "n_min", 100);
    const long long n_max = integer_or(cfg, "n_max", 1000000);
    const long long n_points = integer_or(cfg, "n_points", 36);
    if (n_min < 1 || n_max <= n_min) throw UsageError("need 1 <= n_min < n_max");
    if (n_points < 2) throw UsageError("n_points must be >= 2");

    std::vector<long long> n_grid;
    for (long long i = 0; i < n_points; ++i) {
        const double x = static_cast<double>(i) / static_cast<double>(n_points - 1);
        const long long n = std::llround(
            static_cast<double>(n_min) *
            std::pow(static_cast<double>(n_max) / static_cast<double>(n_min), x));
        if (n_grid.empty() || n > n_grid.back()) n_grid.push_back(n);
    }

    std::vector<std::string> outputs;
    for (double f : frequencies) {
        ts::BecConfig bec;
        try {
            bec = ts::bec_config_from_lab_units(f, a_bohr, a01_bohr, mass_amu, k1, k2, k3);
        } catch (const std::exception& e) {
            throw UsageError(e.what());
        }
        for (const std::string& model_name : models) {
            const ts::LossModel model = loss_model_from_string(model_name);
            const auto sweep =
                ts::plan_sweep(bec, n_grid, model, ts::GridSpec{}, opt.threads);
            char name[64];
            std::snprintf(name, sizeof(name), "bec_sweep_%ghz_%s.csv", f,
                          model_name.c_str());
            ts::CsvWriter csv(fs::path(opt.out_dir) / name);
            csv.write_row({"n_atoms", "e2_min", "t_opt", "chi_ab_t_opt", "alpha", "beta",
                           "chi", "chi_ab", "gamma_eff", "gamma_applied"});
            for (const ts::SweepPoint& pt : sweep) {
                std::vector<std::string> row;
                row.push_back(std::to_string(pt.n_atoms));
                if (pt.result) {
                    row.push_back(ts::format_full(pt.result->e2));
                    row.push_back(ts::format_full(pt.result->t_opt));
                    row.push_back(ts::format_full(pt.rates.chi_ab * pt.result->t_opt));
                    row.push_back(ts::format_full(pt.result->alpha));
                    row.push_back(ts::format_full(pt.result->beta));
                } else {
                    // Undefined point: the gap is recorded, not dropped.
                    for (int k = 0; k < 5; ++k) row.push_back(std::string());
                }
                row.push_back(ts::format_full(pt.rates.chi));
                row.push_back(ts::format_full(pt.rates.chi_ab));
                row.push_back(ts::format_full(pt.rates.gamma_eff));
                row.push_back(ts::format_full(pt.gamma_applied));
                csv.write_row(row);
            }
            outputs.push_back(name);
        }
    }

    json inputs{{"a_bohr", a_bohr},   {"a01_bohr", a01_bohr}, {"mass_amu", mass_amu},
                {"k1", k1},           {"k2", k2},             {"k3", k3},
                {"frequencies_hz", frequencies}, {"loss_models", models},
                {"n_min", n_min},     {"n_max", n_max},       {"n_points", n_points},
                {"n_grid", n_grid}};
    write_manifest(opt, "bec-sweep", inputs, outputs);
    return 0;
}

// ---------------------------------------------------------------------------
// oracle-check: closed forms against dense master-equation integration.

struct SuiteResult {
    std::string status;  // "pass", "fail", or "skipped"
    double max_deviation{0.0};
    double tolerance{0.0};
    std::string notice;
};

// Dense counterparts of the 25 closed-form moments.
std::array<Eigen::MatrixXcd, 25> oracle_moment_operators(const orc::SpinOperators& ops) {
    const auto anti = [](const Eigen::MatrixXcd& lhs, const Eigen::MatrixXcd& rhs) {
        return Eigen::MatrixXcd(lhs * rhs + rhs * lhs);
    };
    return {ops.sx_a,
            ops.sy_a,
            ops.sz_a,
            ops.num_a,
            Eigen::MatrixXcd(ops.sx_a * ops.sx_a),
            Eigen::MatrixXcd(ops.sy_a * ops.sy_a),
            Eigen::MatrixXcd(ops.sz_a * ops.sz_a),
            anti(ops.sy_a, ops.sz_a),
            anti(ops.sx_a, ops.sy_a),
            ops.sx_b,
            ops.sy_b,
            ops.sz_b,
            ops.num_b,
            Eigen::MatrixXcd(ops.sx_b * ops.sx_b),
            Eigen::MatrixXcd(ops.sy_b * ops.sy_b),
            Eigen::MatrixXcd(ops.sz_b * ops.sz_b),
            anti(ops.sy_b, ops.sz_b),
            anti(ops.sx_b, ops.sy_b),
            Eigen::MatrixXcd(ops.sy_a * ops.sy_b),
            Eigen::MatrixXcd(ops.sy_a * ops.sz_b),
            Eigen::MatrixXcd(ops.sz_a * ops.sy_b),
            Eigen::MatrixXcd(ops.sz_a * ops.sz_b),
            Eigen::MatrixXcd(ops.sx_a * ops.sx_b),
            Eigen::MatrixXcd(ops.sx_a * ops.sy_b),
            Eigen::MatrixXcd(ops.sy_a * ops.sx_b)};
}

// Dense-side CorrelatorSet, for feeding the same steering combination the
// closed forms use.
ts::CorrelatorSet oracle_correlator_set(const Eigen::MatrixXcd& rho,
                                        const std::array<Eigen::MatrixXcd, 25>& ops,
                                        double t) {
    ts::CorrelatorSet set;
    set.t = t;
    for (std::size_t k = 0; k < ops.size(); ++k)
        set.*(kCorrelatorFields[k].member) = orc::expectation(rho, ops[k]).real();
    return set;
}

int cmd_oracle_check(const json& cfg, const CommonOptions& opt, bool inject_sign_flip) {
    const int n = static_cast<int>(integer_or(cfg, "n", 3));
    if (n < 1 || n > 6) throw UsageError("oracle-check supports 1 <= n <= 6");
    const double chi = number_or(cfg, "chi", 1.0);
    const double chi_ab = number_or(cfg, "chi_ab", chi);
    std::vector<double> gammas{0.0, 0.05};
    if (cfg.contains("gammas")) {
        if (!cfg.at("gammas").is_array() || cfg.at("gammas").empty())
            throw UsageError("gammas must be a non-empty array of numbers");
        gammas.clear();
        for (const json& g : cfg.at("gammas")) {
            if (!g.is_number() || g.get<double>() < 0.0)
                throw UsageError("gammas entries must be numbers >= 0");
            gammas.push_back(g.get<double>());
        }
    }
    const long long n_times = integer_or(cfg, "n_times", 4);
    if (n_times < 1) throw UsageError("n_times must be >= 1");
    const double u_scale = chi_ab != 0.0 ? std::abs(chi_ab) : 1.0;
    std::vector<double> times;
    for (long long j = 0; j < n_times; ++j) {
        const double frac = n_times == 1
                                ? 1.0
                                : std::pow(10.0, -2.0 *
                                                     static_cast<double>(n_times - 1 - j) /
                                                     static_cast<double>(n_times - 1));
        times.push_back(2.0 * ts::kPi / u_scale * frac);
    }

    SuiteResult correlators{"pass", 0.0, 1e-8, ""};
    SuiteResult elements{"pass", 0.0, 1e-8, ""};
    SuiteResult entropy{"pass", 0.0, 1e-8, ""};
    SuiteResult steering{"pass", 0.0, 1e-8, ""};
    SuiteResult loss_block{"pass", 0.0, 1e-6, ""};
    bool any_losses = false;

    const orc::FockBasis basis(n, n);
    const orc::SpinOperators ops = orc::spin_operators(basis);
    const std::array<Eigen::MatrixXcd, 25> moment_ops = oracle_moment_operators(ops);
    const std::array<std::pair<double, double>, 2> angle_pairs{{{0.0, 0.0}, {0.3, 1.1}}};

    for (double gamma : gammas) {
        if (gamma > 0.0) any_losses = true;
        ts::ModelParams par;
        par.n_a = n;
        par.n_b = n;
        par.chi = chi;
        par.chi_ab = chi_ab;
        par.gamma0 = gamma;
        par.gamma1 = gamma;
        // The deliberate mutation flips the cross-coupling sign in the
        // closed-form moments only; the dense oracle keeps the true sign, so
        // the comparison must catch the error.
        ts::ModelParams par_closed = par;
        if (inject_sign_flip) par_closed.chi_ab = -par.chi_ab;

        const double rate_scale =
            std::max({1.0, std::abs(chi), std::abs(chi_ab), gamma});
        const std::vector<orc::DenseState> states = orc::lindblad_evolve_times(
            par, orc::DenseState{orc::initial_density(basis), 0.0}, times,
            0.05 / rate_scale, 1e-12);

        for (std::size_t ti = 0; ti < times.size(); ++ti) {
            const double t = times[ti];
            const Eigen::MatrixXcd& rho = states[ti].rho;

            const ts::CorrelatorSet closed = ts::correlator_set(par_closed, t);
            const ts::CorrelatorSet dense = oracle_correlator_set(rho, moment_ops, t);
            for (const auto& field : kCorrelatorFields)
                correlators.max_deviation =
                    std::max(correlators.max_deviation,
                             std::abs(closed.*(field.member) - dense.*(field.member)));

            for (int z = -n; z <= n; ++z) {
                for (int r = -n; r <= n; ++r) {
                    for (int x = 0; x + std::abs(z) <= n; ++x) {
                        for (int y = 0; x + y + std::abs(z) <= n; ++y) {
                            for (int u = 0; u + std::abs(r) <= n; ++u) {
                                for (int v = 0; u + v + std::abs(r) <= n; ++v) {
                                    const int zp = std::max(z, 0), zm = std::max(-z, 0);
                                    const int rp = std::max(r, 0), rm = std::max(-r, 0);
                                    const Complex want =
                                        rho(basis.index(x + zp, y + zm, u + rp, v + rm),
                                            basis.index(x + zm, y + zp, u + rm, v + rp));
                                    const Complex got = ts::density_element(
                                        par, ts::BlockLabel{z, r},
                                        ts::ElementIndex{x, y, u, v}, t);
                                    elements.max_deviation =
                                        std::max(elements.max_deviation,
                                                 std::abs(got - want));
                                }
                            }
                        }
                    }
                }
            }

            const Eigen::MatrixXcd sigma = orc::reduced_density_a(basis, rho);
            const double purity = (sigma * sigma).trace().real();
            entropy.max_deviation =
                std::max(entropy.max_deviation,
                         std::abs(ts::linear_entropy(par, t) - (1.0 - purity)));

            const ts::CorrelatorSet dense_set = oracle_correlator_set(rho, moment_ops, t);
            const double scale_sq = 0.25 * static_cast<double>(n) * static_cast<double>(n);
            for (const auto& [alpha, beta] : angle_pairs) {
                const std::optional<double> closed_e2 =
                    ts::epr_value(par, t, alpha, beta);
                const std::optional<double> dense_e2 = ts::detail::e2_from_moments(
                    ts::rotated_moments(dense_set, alpha, beta,
                                        ts::QuadratureConvention::yz),
                    scale_sq);
                if (closed_e2.has_value() != dense_e2.has_value()) {
                    steering.max_deviation =
                        std::numeric_limits<double>::infinity();
                } else if (closed_e2 && dense_e2) {
                    steering.max_deviation = std::max(
                        steering.max_deviation, std::abs(*closed_e2 - *dense_e2));
                }
            }

            if (gamma > 0.0) {
                const Eigen::MatrixXcd block_a =
                    ts::single_loss_block(par, ts::JumpChannel::a0, t) +
                    ts::single_loss_block(par, ts::JumpChannel::a1, t);
                const Eigen::MatrixXcd block_b =
                    ts::single_loss_block(par, ts::JumpChannel::b0, t) +
                    ts::single_loss_block(par, ts::JumpChannel::b1, t);
                const double dev_a =
                    (block_a - orc::sector_block(basis, rho, n - 1, n)).norm();
                const double dev_b =
                    (block_b - orc::sector_block(basis, rho, n, n - 1)).norm();
                loss_block.max_deviation =
                    std::max({loss_block.max_deviation, dev_a, dev_b});
            }
        }
    }

    if (!any_losses) {
        loss_block.status = "skipped";
        loss_block.notice = "no losses configured; loss-sector comparison skipped";
    }
    const auto finalize = [](SuiteResult& suite) {
        if (suite.status == "skipped") return;
        suite.status = suite.max_deviation <= suite.tolerance ? "pass" : "fail";
    };
    std::array<std::pair<const char*, SuiteResult*>, 5> suites{{
        {"correlators", &correlators},
        {"density_elements", &elements},
        {"reduced_entropy", &entropy},
        {"steering", &steering},
        {"single_loss_block", &loss_block},
    }};
    bool all_pass = true;
    json report;
    for (auto& [name, suite] : suites) {
        finalize(*suite);
        if (suite->status == "fail") all_pass = false;
        json entry{{"status", suite->status},
                   {"max_deviation", suite->max_deviation},
                   {"tolerance", suite->tolerance}};
        if (!suite->notice.empty()) entry["notice"] = suite->notice;
        report["suites"][name] = entry;
        if (suite->status == "skipped")
            std::printf("suite %-18s skipped (%s)\n", name, suite->notice.c_str());
        else
            std::printf("suite %-18s max deviation %.3e (tolerance %.0e) [%s]\n", name,
                        suite->max_deviation, suite->tolerance, suite->status.c_str());
    }
    std::printf("oracle check: %s\n", all_pass ? "PASS" : "FAIL");

    report["all_pass"] = all_pass;
    report["inject_sign_flip"] = inject_sign_flip;
    json inputs{{"n", n},          {"chi", chi},        {"chi_ab", chi_ab},
                {"gammas", gammas}, {"n_times", n_times}, {"times", times},
                {"inject_sign_flip", inject_sign_flip}};
    report["inputs"] = inputs;
    const fs::path path = fs::path(opt.out_dir) / "oracle_check.json";
    std::ofstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open for writing: " + path.string());
    file << report.dump(2) << "\n";
    write_manifest(opt, "oracle-check", inputs, {"oracle_check.json"});
    return all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two collective spins with cross-axis coupling and one-body losses: "
                 "exact closed forms, trajectory sampling, and oracle checks"};
    app.require_subcommand(1);
    CommonOptions opt;
    app.add_option("--config", opt.config_path, "JSON config file");
    app.add_option("--out", opt.out_dir, "output directory (created if absent)");
    app.add_option("--seed", opt.seed, "RNG seed for stochastic commands");
    app.add_option("--threads", opt.threads, "worker thread count")
        ->check(CLI::PositiveNumber);

    CLI::App* c_entropy =
        app.add_subcommand("entropy", "linear entropy of one ensemble against time");
    CLI::App* c_epr_scan = app.add_subcommand(
        "epr-scan", "steering parameter against time at fixed measurement angles");
    CLI::App* c_husimi = app.add_subcommand(
        "husimi", "phase-space grids: lossless state, one-loss block, single trajectories");
    CLI::App* c_traj = app.add_subcommand(
        "trajectories", "Monte Carlo moment estimators with standard errors");
    CLI::App* c_bec = app.add_subcommand(
        "bec-sweep", "minimum steering against atom number for a trapped condensate");
    CLI::App* c_oracle = app.add_subcommand(
        "oracle-check", "closed forms against dense master-equation integration");
    bool inject_sign_flip = false;
    c_oracle->add_flag(
        "--inject-sign-flip", inject_sign_flip,
        "flip the cross-coupling sign in the closed-form path (self-test; must fail)");
    CLI::App* c_corr = app.add_subcommand(
        "correlators", "every first and second spin moment against time");
    for (CLI::App* sub : {c_entropy, c_epr_scan, c_husimi, c_traj, c_bec, c_oracle, c_corr})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const json cfg = load_config(opt);
        fs::create_directories(opt.out_dir);
        if (c_entropy->parsed()) return cmd_entropy(cfg, opt);
        if (c_epr_scan->parsed()) return cmd_epr_scan(cfg, opt);
        if (c_husimi->parsed()) return cmd_husimi(cfg, opt);
        if (c_traj->parsed()) return cmd_trajectories(cfg, opt);
        if (c_bec->parsed()) return cmd_bec_sweep(cfg, opt);
        if (c_oracle->parsed()) return cmd_oracle_check(cfg, opt, inject_sign_flip);
        if (c_corr->parsed()) return cmd_correlators(cfg, opt);
        std::fprintf(stderr, "usage error: no command selected\n");
        return 1;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
