#include <CLI11.hpp>

#include <polydet/cli.hpp>

#include <cstdio>
#include <iostream>

namespace {

using polydet::cli::json;

int emit(const std::string& text, const std::string& out_file) {
    if (out_file.empty()) {
        std::cout << text;
        return 0;
    }
    std::ofstream out(out_file, std::ios::binary);
    if (!out) {
        std::cerr << "BadInput: cannot write " << out_file << '\n';
        return 2;
    }
    out << text;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    namespace cli = polydet::cli;
    CLI::App app{"Determinants of the Dirichlet Laplacian on convex polygons and their variations"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string cfg_file, out_file, format, cache_dir;
    std::optional<int> threads;
    std::optional<unsigned> seed;
    std::optional<double> lambda_max;
    app.add_option("--cfg", cfg_file, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--out", out_file, "write the report here instead of stdout");
    app.add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    app.add_option("--cache-dir", cache_dir, "cache directory (default: $POLYDET_CACHE)");
    app.add_option("--threads", threads, "threads for the eigenvalue sweep");
    app.add_option("--seed", seed, "seed of the random interior collocation points");

    std::string polygon_file, field_file, domain_file, route = "formula", suite = "all";
    std::optional<double> fd_step;
    auto* scmap = app.add_subcommand("scmap", "solve the Schwarz-Christoffel parameter problem");
    scmap->add_option("polygon", polygon_file, "polygon JSON")->required();
    auto* det = app.add_subcommand("det", "log det of the Dirichlet Laplacian (MPS spectrum + zeta)");
    det->add_option("polygon", polygon_file, "polygon JSON")->required();
    det->add_option("--lambda-max", lambda_max, "spectral cutoff");
    auto* var = app.add_subcommand("var", "variation of log det under a vertex-velocity field");
    var->add_option("polygon", polygon_file, "polygon JSON")->required();
    var->add_option("field", field_file, "field JSON")->required();
    var->add_option("--route", route, "formula, fd or both")->check(CLI::IsMember({"formula", "fd", "both"}));
    var->add_option("--lambda-max", lambda_max, "spectral cutoff of the fd route");
    var->add_option("--fd-step", fd_step, "step of the fd route");
    auto* validate = app.add_subcommand("validate", "run a validation suite");
    validate->add_option("suite", suite, "geometry, scmap, eigs, det, var, wz or all")
        ->check(CLI::IsMember(polydet::validation::suite_names()));
    auto* wz = app.add_subcommand("wz", "smooth-domain variation and finite-difference check");
    wz->add_option("domain", domain_file, "domain JSON {\"taylor\": [...]}")->required();
    wz->add_option("field", field_file, "boundary field JSON {\"taylor\": [...]}")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::vector<std::string> command(argv + 1, argv + argc);
    cli::RunConfig cfg;
    try {
        if (!cfg_file.empty()) cli::read_config(cli::read_json_file(cfg_file), cfg);
        if (!format.empty()) cfg.format = format;
        if (!cache_dir.empty()) cfg.cache_dir = cache_dir;
        if (threads) cfg.mps.threads = *threads;
        if (seed) cfg.mps.seed = *seed;
        if (lambda_max) cfg.lambda_max = *lambda_max;
        if (fd_step) cfg.fd_step = *fd_step;
        if (validate->parsed()) cfg.suite = suite;
        cli::validate_config(cfg);

        cli::Outcome o;
        if (scmap->parsed()) o = cli::cmd_scmap(polygon_file, cfg);
        else if (det->parsed()) o = cli::cmd_det(polygon_file, cfg);
        else if (var->parsed()) o = cli::cmd_var(polygon_file, field_file, route, cfg);
        else if (validate->parsed()) o = cli::cmd_validate(cfg.suite);
        else o = cli::cmd_wz(domain_file, field_file, cfg);

        const json report = cli::report_json(command, cfg, o);
        const std::string text = cfg.format == "csv" ? cli::results_csv(o.results) : report.dump(2) + "\n";
        if (const int rc = emit(text, out_file)) return rc;
        return o.ok ? 0 : 4;
    } catch (const polydet::Error& e) {
        std::cerr << e.what() << '\n';
        if (cfg.format == "json") {
            const json err{{"command", command},
                           {"error", {{"kind", e.kind()}, {"message", e.what()}, {"exit_code", e.exit_code()}}}};
            emit(err.dump(2) + "\n", out_file);
        }
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "Internal: " << e.what() << '\n';
        return 4;
    }
}
