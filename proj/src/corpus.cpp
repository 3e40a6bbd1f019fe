#include "clonelm/corpus.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>

#include <nlohmann/json.hpp>

#include "clonelm/errors.hpp"
#include "clonelm/java_lexer.hpp"
#include "clonelm/util.hpp"

namespace clonelm::corpus {

namespace {

using json = nlohmann::json;

std::vector<std::string> split_tabs(std::string_view line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            fields.emplace_back(line.substr(start));
            return fields;
        }
        fields.emplace_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

template <typename T>
T parse_number(const std::string& field, std::size_t row) {
    T value{};
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw FormatError(row, "unparsable field '" + field + "'");
    return value;
}

bool parse_flag(const std::string& field, std::size_t row) {
    if (field == "0") return false;
    if (field == "1") return true;
    throw FormatError(row, "flag field must be 0 or 1, got '" + field + "'");
}

struct Allocation {
    std::size_t training = 0;
    std::size_t validation = 0;
    std::size_t testing = 0;
};

// Largest-remainder allocation of n files onto 80/10/10, all in tenths so
// there is no floating point involved. Ties go to validation before testing.
Allocation allocate_80_10_10(std::size_t n) {
    Allocation a{8 * n / 10, n / 10, n / 10};
    std::size_t assigned = a.training + a.validation + a.testing;
    struct Candidate {
        std::size_t remainder;
        int order;  // 0 training, 1 validation, 2 testing
    };
    std::array<Candidate, 3> c = {{{8 * n % 10, 0}, {n % 10, 1}, {n % 10, 2}}};
    std::stable_sort(c.begin(), c.end(), [](const Candidate& x, const Candidate& y) {
        return x.remainder > y.remainder;
    });
    for (std::size_t leftover = n - assigned, i = 0; leftover > 0; --leftover, ++i) {
        switch (c[i % 3].order) {
            case 0: ++a.training; break;
            case 1: ++a.validation; break;
            default: ++a.testing; break;
        }
    }
    return a;
}

}  // namespace

const char* split_name(Split s) {
    switch (s) {
        case Split::Training: return "training";
        case Split::Validation: return "validation";
        default: return "testing";
    }
}

ReferenceFile parse_references(std::string_view tsv_text) {
    ReferenceFile out;
    std::size_t row = 0;
    std::size_t pos = 0;
    while (pos <= tsv_text.size()) {
        std::size_t eol = tsv_text.find('\n', pos);
        std::string_view line = eol == std::string_view::npos
                                    ? tsv_text.substr(pos)
                                    : tsv_text.substr(pos, eol - pos);
        pos = eol == std::string_view::npos ? tsv_text.size() + 1 : eol + 1;
        ++row;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;

        std::vector<std::string> f = split_tabs(line);
        if (f.size() == 5) {
            CloneReference ref;
            ref.file_path = f[0];
            ref.start_line = parse_number<std::size_t>(f[1], row);
            ref.end_line = parse_number<std::size_t>(f[2], row);
            ref.functionality_id = parse_number<int>(f[3], row);
            ref.true_positive = parse_flag(f[4], row);
            if (ref.start_line > ref.end_line)
                throw FormatError(row, "start_line > end_line");
            out.references.push_back(std::move(ref));
        } else if (f.size() == 8) {
            ClonePair pair;
            pair.functionality_id = parse_number<int>(f[6], row);
            pair.ref_a = {f[0], parse_number<std::size_t>(f[1], row),
                          parse_number<std::size_t>(f[2], row), pair.functionality_id, true};
            pair.ref_b = {f[3], parse_number<std::size_t>(f[4], row),
                          parse_number<std::size_t>(f[5], row), pair.functionality_id, true};
            pair.syntactic_similarity = parse_number<double>(f[7], row);
            if (pair.ref_a == pair.ref_b)
                throw FormatError(row, "pair references the same clone twice");
            out.pairs.push_back(std::move(pair));
        } else {
            throw FormatError(row, "expected 5 or 8 tab-separated columns, got " +
                                       std::to_string(f.size()));
        }
    }
    return out;
}

ReferenceFile load_references(const std::string& path) {
    return parse_references(read_file(path));
}

std::string to_tsv_row(const CloneReference& ref) {
    return ref.file_path + "\t" + std::to_string(ref.start_line) + "\t" +
           std::to_string(ref.end_line) + "\t" + std::to_string(ref.functionality_id) +
           "\t" + (ref.true_positive ? "1" : "0");
}

std::string to_tsv_row(const ClonePair& pair) {
    return pair.ref_a.file_path + "\t" + std::to_string(pair.ref_a.start_line) + "\t" +
           std::to_string(pair.ref_a.end_line) + "\t" + pair.ref_b.file_path + "\t" +
           std::to_string(pair.ref_b.start_line) + "\t" +
           std::to_string(pair.ref_b.end_line) + "\t" +
           std::to_string(pair.functionality_id) + "\t" +
           format_double(pair.syntactic_similarity);
}

std::vector<CloneReference> filter_true_positives(
    const std::vector<CloneReference>& refs, const std::set<std::string>& files) {
    std::vector<CloneReference> out;
    for (const CloneReference& r : refs) {
        if (r.true_positive && files.count(r.file_path)) out.push_back(r);
    }
    return out;
}

CorpusSplit stratified_split(
    const std::map<int, std::vector<std::string>>& files_by_functionality,
    const std::string& source_dir, std::uint64_t seed) {
    CorpusSplit split;
    std::set<std::string> seen_hashes;

    for (const auto& [fid, unordered_files] : files_by_functionality) {
        std::vector<std::string> files = unordered_files;
        std::sort(files.begin(), files.end());
        Rng rng(seed * 1000003ull + static_cast<std::uint64_t>(fid));
        deterministic_shuffle(files, rng);

        Allocation quota = allocate_80_10_10(files.size());
        for (std::size_t i = 0; i < files.size(); ++i) {
            std::string content = read_file(source_dir + "/" + files[i]);
            std::string hash = to_hex(fnv1a64(content));
            // exact duplicates of anything already allocated are dropped whole
            if (!seen_hashes.insert(hash).second) continue;

            FileRecord record{files[i], hash, fid};
            if (i < quota.training) {
                split.training.push_back(std::move(record));
            } else if (i < quota.training + quota.validation) {
                split.validation.push_back(std::move(record));
            } else {
                split.testing.push_back(std::move(record));
            }
        }
    }
    return split;
}

std::vector<CloneReference> resolve_overlaps(const std::vector<CloneReference>& refs,
                                             std::vector<CloneReference>* dropped) {
    std::vector<CloneReference> ordered = refs;
    std::sort(ordered.begin(), ordered.end(),
              [](const CloneReference& a, const CloneReference& b) {
                  if (a.start_line != b.start_line) return a.start_line < b.start_line;
                  return a.end_line > b.end_line;
              });

    std::vector<CloneReference> retained;
    for (const CloneReference& ref : ordered) {
        if (!retained.empty() && ref.start_line <= retained.back().end_line) {
            if (dropped) dropped->push_back(ref);
            continue;
        }
        retained.push_back(ref);
    }
    return retained;
}

TokenStream mark_clones(const TokenStream& stream,
                        const std::vector<CloneReference>& refs,
                        std::vector<CloneReference>* dropped) {
    std::vector<CloneReference> retained = resolve_overlaps(refs, dropped);

    // token index span per retained reference
    struct Span {
        std::size_t first;
        std::size_t last;
    };
    std::vector<Span> spans;
    spans.reserve(retained.size());
    for (const CloneReference& ref : retained) {
        std::size_t first = stream.size(), last = stream.size();
        for (std::size_t i = 0; i < stream.size(); ++i) {
            if (first == stream.size() && stream.tokens[i].line >= ref.start_line) first = i;
            if (stream.tokens[i].line <= ref.end_line) last = i;
        }
        if (first == stream.size() || last == stream.size() || last < first) {
            throw RangeError("clone reference lines " + std::to_string(ref.start_line) +
                             "-" + std::to_string(ref.end_line) + " of '" +
                             stream.source_path + "' contain no tokens");
        }
        spans.push_back({first, last});
    }

    TokenStream out;
    out.source_path = stream.source_path;
    out.tokens.reserve(stream.size() + 2 * spans.size());
    std::size_t next = 0;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        if (next < spans.size() && spans[next].first == i) {
            out.tokens.push_back(
                {TokenKind::Meta, std::string(kSoc), stream.tokens[i].line});
        }
        out.tokens.push_back(stream.tokens[i]);
        if (next < spans.size() && spans[next].last == i) {
            out.tokens.push_back(
                {TokenKind::Meta, std::string(kEoc), stream.tokens[i].line});
            ++next;
        }
    }
    return out;
}

namespace {

struct EmittedFile {
    FileRecord record;
    Split split;
    std::size_t tokens = 0;
    std::size_t clone_methods = 0;
    std::vector<int> clone_functionality_ids;
};

}  // namespace

BuildResult build_corpus(const CorpusSplit& split,
                         const std::vector<CloneReference>& refs,
                         const std::string& source_dir,
                         const std::string& output_dir) {
    std::map<std::string, std::vector<CloneReference>> refs_by_file;
    for (const CloneReference& r : refs) {
        if (r.true_positive) refs_by_file[r.file_path].push_back(r);
    }

    BuildResult result;
    std::vector<EmittedFile> emitted;
    std::vector<std::string> warnings;

    auto process = [&](const std::vector<FileRecord>& records, Split which,
                       const std::string& out_name, BuildResult::Totals& totals) {
        std::string text;
        for (const FileRecord& record : records) {
            try {
                TokenStream stream =
                    lex::tokenize(read_file(source_dir + "/" + record.path), record.path);
                auto it = refs_by_file.find(record.path);
                std::vector<CloneReference> for_file =
                    it == refs_by_file.end() ? std::vector<CloneReference>{} : it->second;
                std::vector<CloneReference> dropped;
                std::vector<CloneReference> retained = resolve_overlaps(for_file, &dropped);
                for (const CloneReference& d : dropped) {
                    warnings.push_back("overlapping clone reference dropped: " +
                                       to_tsv_row(d));
                }
                TokenStream marked = mark_clones(stream, retained);
                TokenStream replaced = lex::replace_literals(marked);

                EmittedFile ef;
                ef.record = record;
                ef.split = which;
                ef.tokens = replaced.size();
                ef.clone_methods = retained.size();
                // retained refs are in start-line order == marker order in the line
                for (const CloneReference& r : retained)
                    ef.clone_functionality_ids.push_back(r.functionality_id);

                for (std::size_t i = 0; i < replaced.size(); ++i) {
                    if (i > 0) text += ' ';
                    text += replaced.tokens[i].text;
                }
                text += '\n';

                totals.files += 1;
                totals.clone_methods += ef.clone_methods;
                totals.tokens += ef.tokens;
                emitted.push_back(std::move(ef));
            } catch (const std::exception& e) {
                result.errors.push_back(record.path + ": " + e.what());
            }
        }
        write_file(output_dir + "/" + out_name, text);
    };

    process(split.training, Split::Training, "train.txt", result.training);
    process(split.validation, Split::Validation, "valid.txt", result.validation);
    process(split.testing, Split::Testing, "test.txt", result.testing);

    json manifest;
    auto totals_json = [](const BuildResult::Totals& t) {
        return json{{"files", t.files}, {"clone_methods", t.clone_methods}, {"tokens", t.tokens}};
    };
    manifest["splits"] = {{"training", totals_json(result.training)},
                          {"validation", totals_json(result.validation)},
                          {"testing", totals_json(result.testing)}};
    manifest["files"] = json::array();
    for (const EmittedFile& ef : emitted) {
        manifest["files"].push_back({{"path", ef.record.path},
                                     {"split", split_name(ef.split)},
                                     {"functionality_id", ef.record.functionality_id},
                                     {"content_hash", ef.record.content_hash},
                                     {"tokens", ef.tokens},
                                     {"clone_methods", ef.clone_methods},
                                     {"clone_functionality_ids", ef.clone_functionality_ids}});
    }
    manifest["errors"] = result.errors;
    manifest["warnings"] = warnings;
    write_file(output_dir + "/manifest.json", manifest.dump(2) + "\n");

    return result;
}

std::vector<FunctionalityStats> similarity_stats(const std::vector<ClonePair>& pairs) {
    std::map<int, std::vector<double>> by_fid;
    for (const ClonePair& p : pairs) by_fid[p.functionality_id].push_back(p.syntactic_similarity);

    std::vector<FunctionalityStats> out;
    for (const auto& [fid, sims] : by_fid) {
        FunctionalityStats stats;
        stats.functionality_id = fid;
        double mean = 0.0;
        for (double s : sims) mean += s;
        mean /= static_cast<double>(sims.size());
        double var = 0.0;
        for (double s : sims) var += (s - mean) * (s - mean);
        var /= static_cast<double>(sims.size());
        stats.similarity_mean = mean;
        stats.similarity_variance = var;
        out.push_back(stats);
    }
    return out;
}

}  // namespace clonelm::corpus
