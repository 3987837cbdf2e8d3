#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cmlrec/pipeline.hpp"

namespace {

void report_error(const cmlrec::Error& e, const std::string& stage) {
    std::cerr << "error: kind=" << cmlrec::to_string(e.kind()) << " stage=" << stage << " exit=" << cmlrec::exit_code(e.kind())
              << " detail=" << nlohmann::json(e.detail()).dump() << '\n';
}

}

int main(int argc, char** argv) {
    CLI::App app{"cmlrec: collaborative metric learning for cold-start purchase prediction"};
    app.require_subcommand(1);

    std::string config_path;
    std::string artifacts;
    std::string catalog;
    std::string transactions;
    std::string target;
    std::vector<std::string> overrides;
    std::int64_t seed = -1;
    app.add_option("-c,--config", config_path, "JSON config document");
    app.add_option("-a,--artifacts", artifacts, "artifact directory (overrides CMLREC_ARTIFACTS and the config)");
    app.add_option("--catalog", catalog, "movie catalog JSONL (inputs.catalog)");
    app.add_option("--transactions", transactions, "transactions CSV (inputs.transactions)");
    app.add_option("--target", target, "target movies JSONL for infer (inputs.target)");
    app.add_option("--seed", seed, "root seed (seed)");
    app.add_option("--set", overrides, "override one config key: section.key=value")->take_all();

    std::vector<std::string> stages = cmlrec::stage_names();
    stages.push_back("all");
    stages.push_back("print-config");
    for (const auto& s : stages) {
        app.add_subcommand(s, s == "all" ? "run every stage in order"
                                         : (s == "print-config" ? "print the effective config" : "run the " + s + " stage"))
            ->fallthrough();
    }
    CLI11_PARSE(app, argc, argv);
    const std::string stage = app.get_subcommands().front()->get_name();

    cmlrec::PipelineConfig config;
    try {
        nlohmann::json doc = cmlrec::config_to_json(cmlrec::PipelineConfig{});
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) {
                throw cmlrec::Error(cmlrec::ErrorKind::ConfigError, "cannot open config " + config_path);
            }
            nlohmann::json user = nlohmann::json::parse(in, nullptr, false);
            if (user.is_discarded()) {
                throw cmlrec::Error(cmlrec::ErrorKind::ConfigError, config_path + " is not valid JSON");
            }
            doc = cmlrec::config_to_json(cmlrec::config_from_json(user));
        }
        if (const char* env = std::getenv("CMLREC_ARTIFACTS"); env && *env) {
            doc["artifacts"] = env;
        }
        for (const auto& o : overrides) {
            cmlrec::apply_override(doc, o);
        }
        if (!artifacts.empty()) doc["artifacts"] = artifacts;
        if (!catalog.empty()) doc["inputs"]["catalog"] = catalog;
        if (!transactions.empty()) doc["inputs"]["transactions"] = transactions;
        if (!target.empty()) doc["inputs"]["target"] = target;
        if (seed >= 0) doc["seed"] = seed;
        config = cmlrec::config_from_json(doc);
    } catch (const cmlrec::Error& e) {
        report_error(e, stage);
        return cmlrec::exit_code(e.kind());
    } catch (const nlohmann::json::exception& e) {
        report_error(cmlrec::Error(cmlrec::ErrorKind::ConfigError, e.what()), stage);
        return 2;
    }

    if (stage == "print-config") {
        std::cout << cmlrec::config_to_json(config).dump(2) << '\n';
        return 0;
    }
    try {
        cmlrec::Pipeline pipeline(config, std::cerr);
        if (stage == "all") {
            pipeline.run_all();
        } else {
            pipeline.run(stage);
        }
    } catch (const cmlrec::Error& e) {
        report_error(e, stage);
        return cmlrec::exit_code(e.kind());
    } catch (const std::exception& e) {
        report_error(cmlrec::Error(cmlrec::ErrorKind::ParseError, e.what()), stage);
        return 4;
    }
    return 0;
}
