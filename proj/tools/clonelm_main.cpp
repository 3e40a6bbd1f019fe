#include <filesystem>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "clonelm/bpe.hpp"
#include "clonelm/corpus.hpp"
#include "clonelm/decoder.hpp"
#include "clonelm/errors.hpp"
#include "clonelm/eval.hpp"
#include "clonelm/java_lexer.hpp"
#include "clonelm/kernels.hpp"
#include "clonelm/metrics.hpp"
#include "clonelm/model.hpp"
#include "clonelm/runconfig.hpp"
#include "clonelm/util.hpp"

namespace fs = std::filesystem;
using namespace clonelm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

std::vector<std::vector<nn::TokenId>> read_id_lines(const std::string& path,
                                                    const bpe::Vocabulary& vocab) {
    std::vector<std::vector<nn::TokenId>> out;
    for (const std::vector<std::string>& line : read_token_lines(path))
        out.push_back(vocab.ids_of(line));
    return out;
}

// Functionality folders are subdirectories named by their integer id.
std::map<int, std::vector<std::string>> scan_source_dir(const std::string& source_dir) {
    std::map<int, std::vector<std::string>> by_functionality;
    if (!fs::is_directory(source_dir))
        throw IoError("source dir '" + source_dir + "' does not exist");
    for (const fs::directory_entry& entry : fs::directory_iterator(source_dir)) {
        if (!entry.is_directory()) continue;
        std::string name = entry.path().filename().string();
        int fid = 0;
        try {
            fid = std::stoi(name);
        } catch (...) {
            continue;  // not a functionality folder
        }
        std::vector<std::string> files;
        for (const fs::directory_entry& f :
             fs::recursive_directory_iterator(entry.path())) {
            if (f.is_regular_file() && f.path().extension() == ".java")
                files.push_back(
                    fs::relative(f.path(), source_dir).generic_string());
        }
        std::sort(files.begin(), files.end());
        if (!files.empty()) by_functionality[fid] = std::move(files);
    }
    return by_functionality;
}

int cmd_prepare(const RunConfig& config) {
    fs::create_directories(config.output_dir);
    corpus::ReferenceFile refs = corpus::load_references(config.refs_path);
    if (refs.references.empty())
        std::cerr << "warning: no clone references; corpus will carry no markers\n";

    std::map<int, std::vector<std::string>> by_functionality =
        scan_source_dir(config.source_dir);
    std::set<std::string> known_files;
    for (const auto& [fid, files] : by_functionality)
        known_files.insert(files.begin(), files.end());

    std::vector<corpus::CloneReference> usable =
        corpus::filter_true_positives(refs.references, known_files);

    corpus::CorpusSplit split =
        corpus::stratified_split(by_functionality, config.source_dir, config.seed);
    corpus::BuildResult result =
        corpus::build_corpus(split, usable, config.source_dir, config.output_dir);

    auto show = [](const char* name, const corpus::BuildResult::Totals& t) {
        std::cout << name << ": " << t.files << " files, " << t.clone_methods
                  << " clone methods, " << t.tokens << " tokens\n";
    };
    show("training", result.training);
    show("validation", result.validation);
    show("testing", result.testing);

    if (!result.errors.empty()) {
        std::cerr << result.errors.size() << " file(s) failed:\n";
        for (const std::string& e : result.errors) std::cerr << "  " << e << "\n";
        return kExitData;
    }
    return kExitOk;
}

int cmd_bpe(const RunConfig& config, std::size_t num_merges) {
    std::vector<std::vector<std::string>> train_lines =
        read_token_lines(config.output_dir + "/train.txt");
    std::vector<std::string> train_tokens;
    for (const std::vector<std::string>& line : train_lines)
        train_tokens.insert(train_tokens.end(), line.begin(), line.end());

    // merges come from the training split only
    bpe::MergeTable table = bpe::learn_merges(train_tokens, num_merges);
    bpe::save_merges(table, config.output_dir + "/merges.txt");
    std::cout << "learned " << table.merges.size() << " merges\n";

    std::vector<std::string> encoded_train;
    const struct {
        const char* in;
        const char* out;
    } splits[] = {{"train.txt", "train.bpe"}, {"valid.txt", "valid.bpe"},
                  {"test.txt", "test.bpe"}};
    for (const auto& [in, out] : splits) {
        std::string in_path = config.output_dir + "/" + in;
        if (!fs::exists(in_path)) continue;
        std::string text;
        for (const std::vector<std::string>& line : read_token_lines(in_path)) {
            std::vector<std::string> subwords = bpe::encode(line, table);
            if (std::string_view(in) == "train.txt")
                encoded_train.insert(encoded_train.end(), subwords.begin(),
                                     subwords.end());
            for (std::size_t i = 0; i < subwords.size(); ++i) {
                if (i > 0) text += ' ';
                text += subwords[i];
            }
            text += '\n';
        }
        write_file(config.output_dir + "/" + out, text);
    }

    bpe::Vocabulary vocab = bpe::Vocabulary::from_subwords(encoded_train);
    vocab.save(config.output_dir + "/vocab.txt");
    std::cout << "vocabulary of " << vocab.size() << " subwords\n";
    return kExitOk;
}

int cmd_train(const RunConfig& config) {
    bpe::Vocabulary vocab = bpe::Vocabulary::load(config.output_dir + "/vocab.txt");
    nn::ModelConfig model_config = config.model;
    if (model_config.vocab_size == 0) model_config.vocab_size = vocab.size();

    std::vector<std::vector<nn::TokenId>> train_ids =
        read_id_lines(config.output_dir + "/train.bpe", vocab);
    std::vector<std::vector<nn::TokenId>> valid_ids =
        read_id_lines(config.output_dir + "/valid.bpe", vocab);

    nn::TrainResult result = nn::train(train_ids, valid_ids, model_config,
                                       config.training, config.output_dir);
    write_file(config.output_dir + "/train_log.jsonl", result.log.to_jsonl());
    write_file(config.output_dir + "/train_log.csv", result.log.to_csv());

    std::cout << "best validation perplexity " << result.best_validation_perplexity
              << " at step " << result.best_step << " ("
              << result.log.records.size() << " checkpoints)\n";
    return kExitOk;
}

eval::EvalCorpus load_eval_corpus(const RunConfig& config) {
    eval::EvalCorpus data;
    data.valid_token_lines = read_token_lines(config.output_dir + "/valid.txt");
    data.test_token_lines = read_token_lines(config.output_dir + "/test.txt");

    nlohmann::json manifest =
        nlohmann::json::parse(read_file(config.output_dir + "/manifest.json"));
    for (const nlohmann::json& file : manifest.at("files")) {
        std::string split = file.at("split").get<std::string>();
        if (split == "testing") {
            data.test_clone_functionalities.push_back(
                file.at("clone_functionality_ids").get<std::vector<int>>());
        } else if (split == "training") {
            for (int fid : file.at("clone_functionality_ids").get<std::vector<int>>())
                ++data.training_snippet_counts[fid];
        }
    }
    return data;
}

int cmd_eval(const RunConfig& config, const std::string& checkpoint_path) {
    nn::ModelParameters params = nn::load_checkpoint(checkpoint_path);
    bpe::MergeTable merges = bpe::load_merges(config.output_dir + "/merges.txt");
    bpe::Vocabulary vocab = bpe::Vocabulary::load(config.output_dir + "/vocab.txt");

    std::vector<corpus::ClonePair> pairs;
    if (!config.pairs_path.empty() && fs::exists(config.pairs_path))
        pairs = corpus::load_references(config.pairs_path).pairs;

    eval::EvalCorpus data = load_eval_corpus(config);
    eval::EvalReport report =
        eval::evaluate(params, data, merges, vocab, pairs, config.eval);
    write_file(config.output_dir + "/eval_report.json", report.to_json());

    std::cout << "validation ppl " << report.validation_perplexity << ", test ppl "
              << report.test_perplexity << "\n";
    if (report.test_perplexity_no_markers)
        std::cout << "test ppl without markers " << *report.test_perplexity_no_markers
                  << "\n";
    std::cout << "clone ppl " << report.clone_mean_perplexity << " vs non-clone "
              << report.nonclone_mean_perplexity << " (wilcoxon p "
              << report.wilcoxon_p << ")\n";
    std::cout << "mrr " << report.mrr_score;
    for (const auto& [k, acc] : report.top_k)
        std::cout << ", top-" << k << " " << acc;
    std::cout << "\n";
    return kExitOk;
}

int cmd_complete(const RunConfig& config, const std::string& checkpoint_path,
                 const std::string& context_text, const std::string& ground_truth,
                 const gen::GenerationConfig& gen_config) {
    nn::ModelParameters params = nn::load_checkpoint(checkpoint_path);
    bpe::MergeTable merges = bpe::load_merges(config.output_dir + "/merges.txt");
    bpe::Vocabulary vocab = bpe::Vocabulary::load(config.output_dir + "/vocab.txt");

    std::vector<std::string> context_tokens = split_fields(context_text);
    if (context_tokens.empty()) throw DegenerateInput("empty completion context");
    std::vector<nn::TokenId> context_ids =
        vocab.ids_of(bpe::encode(context_tokens, merges));

    gen::Completion completion = gen::complete_clone(
        params, context_ids, vocab.id_of(kEoc), gen_config);

    std::vector<std::string> subwords = vocab.texts_of(completion.ids);
    std::vector<std::string> tokens;
    try {
        tokens = bpe::decode(subwords);
    } catch (const DanglingContinuation&) {
        std::cerr << "warning: generation truncated mid-token; dropping fragment\n";
        while (!subwords.empty()) {
            subwords.pop_back();
            try {
                tokens = bpe::decode(subwords);
                break;
            } catch (const DanglingContinuation&) {
            }
        }
    }

    TokenStream stream;
    for (const std::string& t : tokens)
        stream.tokens.push_back({is_meta_token(t) ? TokenKind::Meta
                                                  : TokenKind::Identifier,
                                 t, 1});
    std::cout << lex::render(stream);
    if (completion.reason == gen::Termination::Truncated)
        std::cout << "\n[truncated after " << completion.ids.size() << " tokens]\n";

    if (!ground_truth.empty()) {
        std::vector<std::string> reference = split_fields(ground_truth);
        eval::RougeScore r1 = eval::rouge_n(tokens, reference, 1);
        eval::RougeScore r2 = eval::rouge_n(tokens, reference, 2);
        eval::RougeScore rl = eval::rouge_l(tokens, reference);
        std::cout << "rouge1 P " << r1.precision << " R " << r1.recall << " F "
                  << r1.f_measure << "\n";
        std::cout << "rouge2 P " << r2.precision << " R " << r2.recall << " F "
                  << r2.f_measure << "\n";
        std::cout << "rougeL P " << rl.precision << " R " << rl.recall << " F "
                  << rl.f_measure << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"code-clone language modeling toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::int64_t seed_override = -1;
    bool deterministic = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "TOML-style configuration file");
        cmd->add_option("--seed", seed_override, "override the global seed");
        cmd->add_flag("--deterministic", deterministic,
                      "single-threaded kernels (results are identical either way)");
    };

    CLI::App* prepare = app.add_subcommand("prepare", "build the marked corpus");
    add_common(prepare);

    CLI::App* bpe_cmd = app.add_subcommand("bpe", "learn and apply merge operations");
    add_common(bpe_cmd);
    std::int64_t num_merges_flag = -1;
    bpe_cmd->add_option("--num-merges", num_merges_flag, "merge operation budget");

    CLI::App* train_cmd = app.add_subcommand("train", "train a language model");
    add_common(train_cmd);

    CLI::App* eval_cmd = app.add_subcommand("eval", "run the evaluation battery");
    add_common(eval_cmd);
    std::string checkpoint_path;
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate");

    CLI::App* complete_cmd =
        app.add_subcommand("complete", "complete a clone method from context");
    add_common(complete_cmd);
    std::string complete_checkpoint, context_text, ground_truth, strategy_flag;
    std::int64_t max_new_flag = -1;
    complete_cmd->add_option("--checkpoint", complete_checkpoint, "trained checkpoint");
    complete_cmd->add_option("--context", context_text,
                             "whitespace-separated context tokens")
        ->required();
    complete_cmd->add_option("--ground-truth", ground_truth,
                             "reference tokens for a ROUGE score");
    complete_cmd->add_option("--strategy", strategy_flag, "greedy or nucleus");
    complete_cmd->add_option("--max-new-tokens", max_new_flag, "generation cap");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig config = config_path.empty() ? RunConfig::from_table(ConfigTable{})
                                               : RunConfig::from_file(config_path);
        if (seed_override >= 0) {
            config.seed = static_cast<std::uint64_t>(seed_override);
            config.training.seed = config.seed;
            config.generation.seed = config.seed;
            config.eval.seed = config.seed;
        }
        if (deterministic) kernels::set_parallel_enabled(false);

        if (prepare->parsed()) return cmd_prepare(config);
        if (bpe_cmd->parsed()) {
            std::size_t merges = num_merges_flag >= 0
                                     ? static_cast<std::size_t>(num_merges_flag)
                                     : config.num_merges;
            return cmd_bpe(config, merges);
        }
        if (train_cmd->parsed()) return cmd_train(config);
        if (eval_cmd->parsed()) {
            std::string path = checkpoint_path.empty()
                                   ? config.output_dir + "/checkpoint_best.clmc"
                                   : checkpoint_path;
            return cmd_eval(config, path);
        }
        if (complete_cmd->parsed()) {
            gen::GenerationConfig gcfg = config.generation;
            if (!strategy_flag.empty()) gcfg.strategy = gen::parse_strategy(strategy_flag);
            if (max_new_flag >= 0)
                gcfg.max_new_tokens = static_cast<std::size_t>(max_new_flag);
            std::string path = complete_checkpoint.empty()
                                   ? config.output_dir + "/checkpoint_best.clmc"
                                   : complete_checkpoint;
            return cmd_complete(config, path, context_text, ground_truth, gcfg);
        }
        return kExitUsage;
    } catch (const NumericalError& e) {
        std::cerr << e.what() << "\n";
        return kExitNumerical;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitData;
    }
}
