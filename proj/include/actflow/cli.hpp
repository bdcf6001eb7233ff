#pragma once

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "actflow/ablation.hpp"
#include "actflow/gradcheck.hpp"
#include "actflow/synth.hpp"
#include "actflow/trainer.hpp"

namespace actflow::cli {

namespace detail {

inline void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& sets) {
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ParseError("--set expects key=value, got '" + kv + "'");
        apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
}

}  // namespace detail

/// Exit codes: 0 success, 1 runtime failure (message on stderr), 2 usage.
inline int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
               std::ostream& err) {
    CLI::App app{"actflow: joint act/utterance dialogue model toolchain"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dialogue corpus");
    std::size_t synth_dialogues = 0;
    std::uint64_t synth_seed = 1;
    std::string synth_spec, synth_out;
    synth->add_option("--dialogues", synth_dialogues, "number of dialogues")->required();
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--spec", synth_spec, "generator spec JSON (default: built-in)");
    synth->add_option("--out", synth_out, "output corpus path")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
    std::string train_data, train_config, train_out, train_embeddings, train_history;
    std::vector<std::string> train_sets;
    train_cmd->add_option("--data", train_data, "training corpus")->required();
    train_cmd->add_option("--config", train_config, "key = value configuration file");
    train_cmd->add_option("--out", train_out, "checkpoint output path")->required();
    train_cmd->add_option("--embeddings", train_embeddings, "pretrained embedding file");
    train_cmd->add_option("--history", train_history,
                          "training history TSV (default: <out>.history.tsv)");
    train_cmd->add_option("--set", train_sets,
                          "override any config key, e.g. --set lr=0.1 (repeatable)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
    std::string eval_model, eval_data, eval_report, eval_json, eval_topk = "1,3,5,10";
    eval_cmd->add_option("--model", eval_model, "checkpoint path")->required();
    eval_cmd->add_option("--data", eval_data, "evaluation corpus")->required();
    eval_cmd->add_option("--topk", eval_topk, "comma-separated retrieval depths");
    eval_cmd->add_option("--report", eval_report, "flat key-value report path")->required();
    eval_cmd->add_option("--json", eval_json, "structured report path (optional)");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "run the variant comparison grid");
    std::string ablate_data, ablate_config, ablate_out, ablate_embeddings;
    std::vector<std::string> ablate_sets;
    std::size_t ablate_seeds = 3;
    double ablate_test_fraction = 0.2;
    ablate_cmd->add_option("--data", ablate_data, "corpus")->required();
    ablate_cmd->add_option("--config", ablate_config, "configuration file");
    ablate_cmd->add_option("--out", ablate_out, "output directory")->required();
    ablate_cmd->add_option("--seeds", ablate_seeds, "seeds per variant (mean reported)");
    ablate_cmd->add_option("--test-fraction", ablate_test_fraction,
                           "held-out dialogue fraction");
    ablate_cmd->add_option("--embeddings", ablate_embeddings, "pretrained embedding file");
    ablate_cmd->add_option("--set", ablate_sets, "override any config key (repeatable)");

    // predict
    auto* predict_cmd =
        app.add_subcommand("predict", "read sessions from stdin, write act + top-1 utterance");
    std::string predict_model;
    predict_cmd->add_option("--model", predict_model, "checkpoint path")->required();

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    std::string grad_config, grad_variant = "all";
    grad_cmd->add_option("--config", grad_config, "configuration file (default: tiny dims)");
    grad_cmd->add_option("--variant", grad_variant,
                         "full|no-act|no-autoencoder|single-act|single-utt|all");

    std::vector<const char*> argv;
    argv.push_back("actflow");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (synth->parsed()) {
            GeneratorSpec spec =
                synth_spec.empty() ? default_generator_spec() : load_generator_spec(synth_spec);
            auto corpus = synth_corpus(synth_dialogues, synth_seed, spec);
            write_corpus(corpus, synth_out);
            out << "wrote " << corpus.size() << " dialogues to " << synth_out << "\n";
            return 0;
        }

        if (train_cmd->parsed()) {
            TrainConfig cfg = train_config.empty() ? TrainConfig{} : load_config(train_config);
            detail::apply_overrides(cfg, train_sets);
            auto corpus = load_corpus(train_data);
            TrainOutput trained = train(cfg, corpus, train_embeddings, &out);
            save_checkpoint(trained.params, cfg, trained.vocab, train_out);
            const std::string history_path =
                train_history.empty() ? train_out + ".history.tsv" : train_history;
            write_history(trained.history, history_path);
            out << "samples " << trained.sample_report.samples << " skipped_no_user "
                << trained.sample_report.skipped_no_user_turn << " skipped_unknown_act "
                << trained.sample_report.skipped_unknown_act << "\n";
            out << "checkpoint " << train_out << "\nhistory " << history_path << "\n";
            return 0;
        }

        if (eval_cmd->parsed()) {
            Checkpoint ckpt = load_checkpoint(eval_model);
            auto corpus = load_corpus(eval_data);
            SampleBuildReport report;
            auto samples = build_samples(corpus, ckpt.vocab.acts, ckpt.vocab.tokens,
                                         ckpt.vocab.candidates, &report);
            EvalOptions opts = eval_options_from(ckpt.config);
            opts.ks = actflow::detail::parse_sizes(eval_topk);
            if (opts.ks.empty()) throw ParseError("eval: --topk lists no depths");
            EvalReport result = evaluate_model(ckpt.params, samples, ckpt.vocab, opts);
            std::ofstream rep(eval_report);
            if (!rep) throw ParseError("cannot open report path: " + eval_report);
            rep << result.to_text();
            if (!eval_json.empty())
                std::ofstream(eval_json) << result.to_json().dump(2) << "\n";
            out << result.to_text();
            out << "samples " << result.samples << " skipped_unknown_act "
                << report.skipped_unknown_act << " golds_outside_candidates "
                << report.golds_outside_candidates << "\n";
            return 0;
        }

        if (ablate_cmd->parsed()) {
            TrainConfig cfg = ablate_config.empty() ? TrainConfig{} : load_config(ablate_config);
            detail::apply_overrides(cfg, ablate_sets);
            auto corpus = load_corpus(ablate_data);
            auto results = run_ablation(cfg, corpus, ablate_seeds, ablate_test_fraction,
                                        ablate_embeddings, &out);
            write_ablation_reports(results, ablate_out);
            for (const auto& r : results)
                out << r.name << " micro_f1 " << r.mean_metrics.at("micro_f1") << "\n";
            out << "reports in " << ablate_out << "\n";
            return 0;
        }

        if (predict_cmd->parsed()) {
            Checkpoint ckpt = load_checkpoint(predict_model);
            std::string line;
            std::size_t line_no = 0;
            while (std::getline(in, line)) {
                ++line_no;
                if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                DialogueSession session = parse_session_line(line, line_no);
                TurnSample input =
                    make_prediction_input(session, ckpt.vocab.acts, ckpt.vocab.tokens);
                input.gold_act = 0;  // unused; forward needs a valid index
                ForwardCache cache;
                ForwardResult r = model_forward(input, ckpt.params, ckpt.params.variant, cache);
                auto top = predict_utterance(cache.v, ckpt.params.utt_head, 1);
                out << ckpt.vocab.acts.label(r.act.predicted) << "\t"
                    << ckpt.vocab.candidates.utterance(top[0].id) << "\n";
            }
            return 0;
        }

        if (grad_cmd->parsed()) {
            TrainConfig cfg =
                grad_config.empty() ? gradcheck_default_config() : load_config(grad_config);
            auto results = run_gradcheck(cfg, grad_variant);
            double worst = 0.0;
            for (const auto& r : results) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.3e", r.max_rel_error);
                out << "variant " << r.variant << ": params " << r.parameter_count
                    << " max_rel_error " << buf
                    << (r.max_rel_error < 1e-4 ? " PASS" : " FAIL") << "\n";
                worst = std::max(worst, r.max_rel_error);
            }
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.3e", worst);
            out << "max relative error " << buf << "\n";
            return worst < 1e-4 ? 0 : 1;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace actflow::cli
