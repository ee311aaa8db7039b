#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "loraplan/commands.hpp"
#include "loraplan/errors.hpp"
#include "loraplan/scenario.hpp"

#include "CLI11.hpp"

namespace {

loraplan::ScenarioConfig load_config(const std::string& config_path,
                                     const std::string& preset_name) {
    if (!config_path.empty() && !preset_name.empty())
        throw loraplan::config_error("--config and --preset are mutually exclusive");
    if (!preset_name.empty()) return loraplan::preset(preset_name);
    if (config_path.empty())
        throw loraplan::config_error("one of --config or --preset is required");
    std::ifstream in(config_path);
    if (!in) throw loraplan::config_error("cannot open config '" + config_path + "'");
    return loraplan::parse_scenario(in);
}

// "-" means stdout.
struct OutStream {
    std::ofstream file;
    std::ostream* os = &std::cout;

    explicit OutStream(const std::string& path) {
        if (path.empty() || path == "-") return;
        file.open(path);
        if (!file) throw loraplan::data_error("cannot open output '" + path + "'");
        os = &file;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LoRa cell capacity models, SF allocators and uplink simulator"};
    app.require_subcommand(1);

    std::string config_path, preset_name, out_path;
    std::vector<std::uint64_t> seed_override;
    int jobs = 1;
    bool no_timestamp = false;
    auto add_common = [&](CLI::App* cmd, bool with_config) {
        if (with_config) {
            cmd->add_option("--config", config_path, "Scenario config (JSON)");
            cmd->add_option("--preset", preset_name, "Built-in scenario name");
        }
        cmd->add_option("--out", out_path, "Output path ('-' = stdout)");
        cmd->add_option("--seeds", seed_override, "Seed list override")->delimiter(',');
        cmd->add_option("--jobs", jobs, "Worker threads");
        cmd->add_flag("--no-header-timestamp", no_timestamp,
                      "Omit the timestamp comment (byte-stable output)");
    };

    CLI::App* analyze = app.add_subcommand("analyze", "Emit analytic curves as CSV");
    add_common(analyze, true);
    CLI::App* simulate = app.add_subcommand("simulate", "Run the simulation sweep");
    add_common(simulate, true);
    CLI::App* compare = app.add_subcommand("compare", "Summarize and compare report CSVs");
    std::vector<std::string> report_paths;
    compare->add_option("reports", report_paths, "Report CSV paths")->required();
    add_common(compare, false);
    CLI::App* import_trace = app.add_subcommand("import-trace", "Build a scenario from a trace");
    std::string trace_path;
    import_trace->add_option("trace", trace_path, "RSSI trace CSV")->required();
    add_common(import_trace, false);
    CLI::App* preset_cmd = app.add_subcommand("preset", "Print a built-in scenario config");
    std::string dump_name;
    preset_cmd->add_option("name", dump_name, "Preset name")->required();
    preset_cmd->add_option("--out", out_path, "Output path ('-' = stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        loraplan::RunOptions opt;
        opt.seeds = seed_override;
        opt.jobs = jobs;
        opt.header_timestamp = !no_timestamp;
        if (analyze->parsed()) {
            OutStream out(out_path);
            loraplan::cmd_analyze(load_config(config_path, preset_name), opt, *out.os);
        } else if (simulate->parsed()) {
            OutStream out(out_path);
            loraplan::cmd_simulate(load_config(config_path, preset_name), opt, *out.os);
        } else if (compare->parsed()) {
            OutStream out(out_path);
            loraplan::cmd_compare(report_paths, opt, *out.os);
        } else if (import_trace->parsed()) {
            loraplan::cmd_import_trace(trace_path, out_path.empty() ? "." : out_path, opt);
        } else if (preset_cmd->parsed()) {
            OutStream out(out_path);
            *out.os << loraplan::serialize_scenario_text(loraplan::preset(dump_name));
        }
    } catch (const loraplan::config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const loraplan::data_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
    return 0;
}
