#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "clonelm/decoder.hpp"
#include "clonelm/eval.hpp"
#include "clonelm/model.hpp"

namespace clonelm {

// Minimal TOML-style table: [section] headers, key = value, # comments.
// Values: "strings", integers, floats, booleans, flat arrays of integers.
// Keys are exposed flattened as "section.key".
class ConfigTable {
public:
    static ConfigTable parse(std::string_view text);
    static ConfigTable parse_file(const std::string& path);

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key, std::string fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::int64_t> get_int_array(const std::string& key,
                                            std::vector<std::int64_t> fallback) const;

private:
    struct Value {
        std::string raw;         // scalar text, quotes stripped for strings
        bool is_string = false;
        bool is_array = false;
        std::vector<std::string> items;
    };
    std::map<std::string, Value> values_;
};

struct RunConfig {
    // paths
    std::string source_dir = "data";
    std::string refs_path = "data/refs.tsv";
    std::string pairs_path;  // optional
    std::string output_dir = "out";

    nn::ModelConfig model;
    nn::TrainingConfig training;
    gen::GenerationConfig generation;
    eval::EvalOptions eval;

    std::size_t num_merges = 10000;
    std::uint64_t seed = 42;

    // Defaults follow the declared per-family shapes (GRU 2 x 128,
    // transformer 4 layers / 8 heads / 256 wide) and may be overridden per
    // key. vocab_size 0 means "size of the vocabulary file".
    static RunConfig from_table(const ConfigTable& table);
    static RunConfig from_file(const std::string& path);
};

}  // namespace clonelm
