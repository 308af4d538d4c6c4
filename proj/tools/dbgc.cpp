#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>

#include "dbgc/error.hpp"
#include "dbgc/io.hpp"
#include "dbgc/pipeline.hpp"

namespace {

struct Cli {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    double alpha = 0.0;
    int epochs = 0;
    int k_target = 0;

    CLI::Option* config_opt = nullptr;
    CLI::Option* out_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* alpha_opt = nullptr;
    CLI::Option* epochs_opt = nullptr;
    CLI::Option* k_opt = nullptr;
};

void add_common_flags(CLI::App& app, Cli& cli) {
    cli.config_opt = app.add_option("--config", cli.config_path, "JSON config file");
    cli.out_opt = app.add_option("--out", cli.out_dir, "Output directory");
    cli.seed_opt = app.add_option("--seed", cli.seed, "Root seed");
    cli.alpha_opt = app.add_option("--alpha", cli.alpha, "Fusion weight for the superpixel branch")
                        ->check(CLI::Range(0.0, 1.0));
    cli.epochs_opt = app.add_option("--epochs", cli.epochs, "Epoch count override")
                         ->check(CLI::PositiveNumber);
    cli.k_opt = app.add_option("--k-target", cli.k_target, "Requested superpixel count")
                    ->check(CLI::PositiveNumber);
}

dbgc::PipelineConfig resolve_config(const Cli& cli, const std::string& verb) {
    dbgc::PipelineConfig cfg;
    if (*cli.config_opt) {
        cfg = dbgc::parse_config_json(dbgc::read_text_file(cli.config_path));
    }
    if (const char* env = std::getenv("DBGC_OUT"); env && *env) {
        cfg.out_dir = env;
    }
    if (*cli.out_opt) cfg.out_dir = cli.out_dir;
    if (*cli.seed_opt) cfg.seed = cli.seed;
    if (*cli.alpha_opt) cfg.alpha = cli.alpha;
    if (*cli.k_opt) cfg.k_target = cli.k_target;
    if (*cli.epochs_opt) {
        if (verb == "pretrain") {
            cfg.pretrain_epochs = cli.epochs;
        } else if (verb == "train") {
            cfg.joint_epochs = cli.epochs;
        } else {
            cfg.pretrain_epochs = cli.epochs;
            cfg.joint_epochs = cli.epochs;
        }
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-branch PolSAR image classifier"};
    app.require_subcommand(1);

    Cli cli;
    struct Verb {
        const char* name;
        const char* help;
    };
    const Verb verbs[] = {
        {"prepare", "Synthesize or load a scene, extract features, draw the label split"},
        {"segment", "Segment the Pauli composite into superpixels"},
        {"pretrain", "Pretrain the masked graph autoencoder on the superpixel graph"},
        {"train", "Train the fused classifier on the labeled pixels"},
        {"evaluate", "Classify every pixel and score against held-out labels"},
        {"run-all", "Run the five stages in order"},
    };
    for (const auto& v : verbs) {
        CLI::App* sub = app.add_subcommand(v.name, v.help);
        sub->parse_complete_callback([&app] { (void)app; });
    }
    add_common_flags(app, cli);
    app.fallthrough();

    CLI11_PARSE(app, argc, argv);

    const std::string verb = app.get_subcommands().front()->get_name();
    try {
        dbgc::PipelineConfig cfg = resolve_config(cli, verb);
        if (verb == "prepare") {
            dbgc::cmd_prepare(cfg);
        } else if (verb == "segment") {
            dbgc::cmd_segment(cfg);
        } else if (verb == "pretrain") {
            dbgc::cmd_pretrain(cfg);
        } else if (verb == "train") {
            dbgc::cmd_train(cfg);
        } else if (verb == "evaluate") {
            dbgc::cmd_evaluate(cfg);
        } else {
            dbgc::run_all(cfg);
        }
    } catch (const dbgc::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "IoError: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
