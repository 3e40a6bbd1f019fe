#include "clonelm/runconfig.hpp"

#include <charconv>

#include "clonelm/errors.hpp"
#include "clonelm/util.hpp"

namespace clonelm {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

// strip a trailing comment, respecting double quotes
std::string_view strip_comment(std::string_view line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

}  // namespace

ConfigTable ConfigTable::parse(std::string_view text) {
    ConfigTable table;
    std::string section;
    std::size_t pos = 0, row = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line = eol == std::string_view::npos
                                    ? text.substr(pos)
                                    : text.substr(pos, eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++row;

        line = trim(strip_comment(line));
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(row) + ": unterminated section");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("line " + std::to_string(row) + ": expected key = value");
        std::string key(trim(line.substr(0, eq)));
        std::string_view raw = trim(line.substr(eq + 1));
        if (key.empty() || raw.empty())
            throw ConfigError("line " + std::to_string(row) + ": empty key or value");

        Value value;
        if (raw.front() == '"') {
            if (raw.size() < 2 || raw.back() != '"')
                throw ConfigError("line " + std::to_string(row) + ": unterminated string");
            value.raw = std::string(raw.substr(1, raw.size() - 2));
            value.is_string = true;
        } else if (raw.front() == '[') {
            if (raw.back() != ']')
                throw ConfigError("line " + std::to_string(row) + ": unterminated array");
            value.is_array = true;
            std::string_view body = raw.substr(1, raw.size() - 2);
            std::size_t start = 0;
            while (start <= body.size()) {
                std::size_t comma = body.find(',', start);
                std::string_view item = comma == std::string_view::npos
                                            ? body.substr(start)
                                            : body.substr(start, comma - start);
                item = trim(item);
                if (!item.empty()) value.items.emplace_back(item);
                if (comma == std::string_view::npos) break;
                start = comma + 1;
            }
        } else {
            value.raw = std::string(raw);
        }
        std::string full_key = section.empty() ? key : section + "." + key;
        table.values_[full_key] = std::move(value);
    }
    return table;
}

ConfigTable ConfigTable::parse_file(const std::string& path) {
    return parse(read_file(path));
}

bool ConfigTable::has(const std::string& key) const { return values_.count(key) > 0; }

std::string ConfigTable::get_string(const std::string& key, std::string fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second.raw;
}

std::int64_t ConfigTable::get_int(const std::string& key, std::int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::int64_t out{};
    const std::string& raw = it->second.raw;
    auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), out);
    if (ec != std::errc() || ptr != raw.data() + raw.size())
        throw ConfigError("'" + key + "' is not an integer: " + raw);
    return out;
}

double ConfigTable::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    double out{};
    const std::string& raw = it->second.raw;
    auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), out);
    if (ec != std::errc() || ptr != raw.data() + raw.size())
        throw ConfigError("'" + key + "' is not a number: " + raw);
    return out;
}

bool ConfigTable::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second.raw == "true") return true;
    if (it->second.raw == "false") return false;
    throw ConfigError("'" + key + "' is not a boolean: " + it->second.raw);
}

std::vector<std::int64_t> ConfigTable::get_int_array(
    const std::string& key, std::vector<std::int64_t> fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (!it->second.is_array) throw ConfigError("'" + key + "' is not an array");
    std::vector<std::int64_t> out;
    for (const std::string& item : it->second.items) {
        std::int64_t v{};
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size())
            throw ConfigError("'" + key + "' has a non-integer element: " + item);
        out.push_back(v);
    }
    return out;
}

RunConfig RunConfig::from_table(const ConfigTable& t) {
    RunConfig c;
    c.source_dir = t.get_string("paths.source_dir", c.source_dir);
    c.refs_path = t.get_string("paths.refs", c.refs_path);
    c.pairs_path = t.get_string("paths.pairs", c.pairs_path);
    c.output_dir = t.get_string("paths.output_dir", c.output_dir);

    c.seed = static_cast<std::uint64_t>(t.get_int("seed", static_cast<std::int64_t>(c.seed)));

    c.model.family = nn::parse_family(t.get_string("model.family", "gru"));
    bool is_gru = c.model.family == nn::Family::Gru;
    c.model.vocab_size =
        static_cast<std::size_t>(t.get_int("model.vocab_size", 0));
    c.model.embedding_dim = static_cast<std::size_t>(
        t.get_int("model.embedding_dim", is_gru ? 128 : 256));
    c.model.hidden_dim = static_cast<std::size_t>(
        t.get_int("model.hidden_dim", is_gru ? 128 : 1024));
    c.model.num_layers =
        static_cast<std::size_t>(t.get_int("model.num_layers", is_gru ? 2 : 4));
    c.model.num_heads = static_cast<std::size_t>(t.get_int("model.num_heads", 8));
    c.model.context_length =
        static_cast<std::size_t>(t.get_int("model.context_length", 128));
    c.model.init_scale = t.get_double("model.init_scale", 0.02);

    c.training.epochs = static_cast<std::size_t>(t.get_int("training.epochs", 50));
    c.training.batch_size =
        static_cast<std::size_t>(t.get_int("training.batch_size", 64));
    c.training.learning_rate = t.get_double("training.learning_rate", 0.5);
    c.training.grad_accumulation_steps = static_cast<std::size_t>(
        t.get_int("training.grad_accumulation_steps", 1));
    c.training.checkpoint_interval = static_cast<std::size_t>(
        t.get_int("training.checkpoint_interval", 500));
    c.training.precision =
        nn::parse_precision(t.get_string("training.precision", "f64"));
    c.training.seed = c.seed;

    c.generation.strategy =
        gen::parse_strategy(t.get_string("generation.strategy", "nucleus"));
    c.generation.nucleus_p = t.get_double("generation.nucleus_p", 0.95);
    c.generation.max_new_tokens = static_cast<std::size_t>(
        t.get_int("generation.max_new_tokens", 512));
    c.generation.seed = c.seed;

    std::vector<std::int64_t> ks = t.get_int_array("eval.top_k", {1, 3, 5, 10});
    c.eval.top_k.clear();
    for (std::int64_t k : ks) {
        if (k < 1) throw ConfigError("eval.top_k entries must be positive");
        c.eval.top_k.push_back(static_cast<std::size_t>(k));
    }
    c.eval.ablation = t.get_bool("eval.ablation", true);
    c.eval.rouge_samples =
        static_cast<std::size_t>(t.get_int("eval.rouge_samples", 50));
    c.eval.context_window =
        static_cast<std::size_t>(t.get_int("eval.context_window", 20));
    c.eval.max_new_tokens = c.generation.max_new_tokens;
    c.eval.nucleus_p = c.generation.nucleus_p;
    c.eval.seed = c.seed;

    c.num_merges = static_cast<std::size_t>(t.get_int("bpe.num_merges", 10000));
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_table(ConfigTable::parse_file(path));
}

}  // namespace clonelm
