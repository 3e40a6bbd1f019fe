#include <doctest.h>

#include <filesystem>
#include <set>

#include "clonelm/corpus.hpp"
#include "clonelm/errors.hpp"
#include "clonelm/java_lexer.hpp"
#include "clonelm/util.hpp"
#include "fixture.hpp"

using namespace clonelm;
using namespace clonelm::corpus;
namespace fs = std::filesystem;

TEST_CASE("reference rows parse by column count") {
    ReferenceFile f = parse_references("a/B.java\t5\t9\t7\t1\n");
    REQUIRE(f.references.size() == 1);
    CHECK(f.references[0] == CloneReference{"a/B.java", 5, 9, 7, true});
    CHECK(f.pairs.empty());

    ReferenceFile empty = parse_references("");
    CHECK(empty.references.empty());
    CHECK(empty.pairs.empty());

    std::string pair_row = "a/B.java\t5\t9\ta/C.java\t2\t6\t7\t0.903";
    ReferenceFile p = parse_references(pair_row + "\n");
    REQUIRE(p.pairs.size() == 1);
    CHECK(p.pairs[0].syntactic_similarity == doctest::Approx(0.903));
    CHECK(to_tsv_row(p.pairs[0]) == pair_row);  // byte-identical round trip
}

TEST_CASE("reference parse errors carry the row number") {
    CHECK_THROWS_AS(parse_references("a\t1\t2\t3\n"), FormatError);
    CHECK_THROWS_AS(parse_references("a\t1\t2\t3\tmaybe\n"), FormatError);
    CHECK_THROWS_AS(parse_references("a\tx\t2\t3\t1\n"), FormatError);
    try {
        parse_references("a\t1\t2\t3\t1\nbad row\n");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.row() == 2);
    }
}

TEST_CASE("filter_true_positives keeps existing true positives in order") {
    std::set<std::string> files = {"A"};
    std::vector<CloneReference> refs = {{"A", 1, 2, 1, true},
                                        {"A", 3, 4, 1, false},
                                        {"B", 1, 2, 1, true}};
    std::vector<CloneReference> kept = filter_true_positives(refs, files);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].file_path == "A");
    CHECK(kept[0].true_positive);

    CHECK(filter_true_positives({{"A", 1, 2, 1, false}}, files).empty());
}

TEST_CASE("filter matches a brute-force predicate scan") {
    Rng rng(99);
    std::set<std::string> files;
    for (int i = 0; i < 10; ++i) files.insert("f" + std::to_string(i));
    std::vector<CloneReference> refs;
    for (int i = 0; i < 1000; ++i) {
        refs.push_back({"f" + std::to_string(rng.below(20)), 1 + rng.below(50),
                        60 + rng.below(50), static_cast<int>(1 + rng.below(5)),
                        rng.below(2) == 1});
    }
    std::vector<CloneReference> got = filter_true_positives(refs, files);
    std::vector<CloneReference> expected;
    for (const CloneReference& r : refs)
        if (r.true_positive && files.count(r.file_path)) expected.push_back(r);
    CHECK(got == expected);
}

namespace {

// n identical-functionality files on disk, distinct contents
std::string files_on_disk(int n, std::map<int, std::vector<std::string>>& by_fid) {
    std::string dir = fixture::scratch_dir("split" + std::to_string(n));
    fs::create_directories(dir + "/1");
    for (int i = 0; i < n; ++i) {
        std::string rel = "1/F" + std::to_string(i) + ".java";
        write_file(dir + "/" + rel, "class F" + std::to_string(i) + " {}\n");
        by_fid[1].push_back(rel);
    }
    return dir;
}

}  // namespace

TEST_CASE("largest-remainder split honors 80/10/10") {
    auto counts = [](int n) {
        std::map<int, std::vector<std::string>> by_fid;
        std::string dir = files_on_disk(n, by_fid);
        CorpusSplit split = stratified_split(by_fid, dir, 7);
        return std::array<std::size_t, 3>{split.training.size(),
                                          split.validation.size(),
                                          split.testing.size()};
    };
    CHECK(counts(10) == std::array<std::size_t, 3>{8, 1, 1});
    CHECK(counts(1) == std::array<std::size_t, 3>{1, 0, 0});
    CHECK(counts(5) == std::array<std::size_t, 3>{4, 1, 0});  // tie: valid first
    CHECK(counts(8) == std::array<std::size_t, 3>{6, 1, 1});
}

TEST_CASE("split drops exact duplicates and stays deterministic") {
    std::string dir = fixture::scratch_dir("dedup");
    fs::create_directories(dir + "/1");
    fs::create_directories(dir + "/2");
    std::map<int, std::vector<std::string>> by_fid;
    for (int i = 0; i < 10; ++i) {
        std::string rel = "1/F" + std::to_string(i) + ".java";
        write_file(dir + "/" + rel, "class F" + std::to_string(i) + " {}\n");
        by_fid[1].push_back(rel);
    }
    // folder 2: same bytes as 1/F0.java
    write_file(dir + "/2/Dup.java", "class F0 {}\n");
    by_fid[2].push_back("2/Dup.java");

    CorpusSplit a = stratified_split(by_fid, dir, 3);
    CorpusSplit b = stratified_split(by_fid, dir, 3);

    std::set<std::string> hashes;
    std::size_t total = 0;
    for (const auto* part : {&a.training, &a.validation, &a.testing}) {
        for (const FileRecord& r : *part) {
            CHECK(hashes.insert(r.content_hash).second);  // disjoint by hash
            ++total;
        }
    }
    CHECK(total == 10);  // duplicate dropped entirely

    auto paths = [](const CorpusSplit& s) {
        std::vector<std::string> out;
        for (const auto* part : {&s.training, &s.validation, &s.testing})
            for (const FileRecord& r : *part) out.push_back(r.path);
        return out;
    };
    CHECK(paths(a) == paths(b));  // same seed, same outcome
}

TEST_CASE("mark_clones inserts one pair per reference") {
    TokenStream s = lex::tokenize("class A {\nvoid f() {\nint x;\n}\n}\n", "A.java");
    // method spans lines 2-4
    TokenStream marked = mark_clones(s, {{"A.java", 2, 4, 1, true}});
    std::vector<std::string> t = marked.texts();
    REQUIRE(t.size() == s.size() + 2);
    CHECK(t[3] == "<soc>");   // before "void" on line 2
    CHECK(t[t.size() - 2] == "<eoc>");  // after the line-4 "}"
    CHECK(t.back() == "}");   // class brace on line 5 stays outside

    CHECK(mark_clones(s, {}).texts() == s.texts());
}

TEST_CASE("overlapping references keep the earliest, then longest") {
    TokenStream s;
    for (std::size_t line = 1; line <= 12; ++line)
        s.tokens.push_back({TokenKind::Identifier, "t" + std::to_string(line), line});

    std::vector<CloneReference> dropped;
    std::vector<CloneReference> retained = resolve_overlaps(
        {{"f", 5, 9, 1, true}, {"f", 7, 12, 1, true}}, &dropped);
    REQUIRE(retained.size() == 1);
    CHECK(retained[0].start_line == 5);
    REQUIRE(dropped.size() == 1);
    CHECK(dropped[0].start_line == 7);

    TokenStream marked = mark_clones(s, {{"f", 5, 9, 1, true}, {"f", 7, 12, 1, true}});
    std::size_t soc = 0, eoc = 0;
    for (const Token& t : marked.tokens) {
        if (t.text == kSoc) ++soc;
        if (t.text == kEoc) ++eoc;
    }
    CHECK(soc == 1);
    CHECK(eoc == 1);

    // same start: longest wins
    std::vector<CloneReference> same_start =
        resolve_overlaps({{"f", 3, 5, 1, true}, {"f", 3, 9, 1, true}});
    REQUIRE(same_start.size() == 1);
    CHECK(same_start[0].end_line == 9);
}

TEST_CASE("mark_clones rejects token-free spans") {
    TokenStream s = lex::tokenize("int a;\n\n\n\nint b;\n", "g.java");
    CHECK_THROWS_AS(mark_clones(s, {{"g.java", 2, 4, 1, true}}), RangeError);
    CHECK_THROWS_AS(mark_clones(s, {{"g.java", 9, 12, 1, true}}), RangeError);
}

TEST_CASE("build_corpus writes marked corpus files and a consistent manifest") {
    std::string dir = fixture::scratch_dir("build");
    fixture::Corpus fx = fixture::write_corpus(dir + "/src", {{1, 10}, {2, 4}, {3, 3}}, 5);
    std::string out = dir + "/out";
    fs::create_directories(out);

    ReferenceFile refs = load_references(fx.refs_path);
    std::map<int, std::vector<std::string>> by_fid;
    for (const fixture::GeneratedFile& gf : fx.files)
        by_fid[gf.ref.functionality_id].push_back(gf.relative_path);

    CorpusSplit split = stratified_split(by_fid, dir + "/src", 21);
    BuildResult result = build_corpus(split, refs.references, dir + "/src", out);
    CHECK(result.errors.empty());
    CHECK(result.training.files == split.training.size());

    // marker balance and per-line marker counting
    std::size_t soc_total = 0;
    for (const char* name : {"train.txt", "valid.txt", "test.txt"}) {
        for (const auto& line : read_token_lines(out + "/" + name)) {
            long depth = 0;
            for (const std::string& t : line) {
                if (t == kSoc) ++depth;
                if (t == kEoc) --depth;
                CHECK(depth >= 0);
                CHECK(depth <= 1);
                if (t == kSoc) ++soc_total;
            }
            CHECK(depth == 0);
        }
    }
    std::size_t manifest_clones = result.training.clone_methods +
                                  result.validation.clone_methods +
                                  result.testing.clone_methods;
    CHECK(soc_total == manifest_clones);
    CHECK(manifest_clones == 17);  // one true-positive ref per generated file

    // token counts add up
    std::size_t token_total = 0;
    for (const char* name : {"train.txt", "valid.txt", "test.txt"})
        for (const auto& line : read_token_lines(out + "/" + name))
            token_total += line.size();
    CHECK(token_total == result.training.tokens + result.validation.tokens +
                             result.testing.tokens);

    // reruns are byte-identical
    std::string first = read_file(out + "/train.txt");
    CorpusSplit split2 = stratified_split(by_fid, dir + "/src", 21);
    build_corpus(split2, refs.references, dir + "/src", out);
    CHECK(read_file(out + "/train.txt") == first);
}

TEST_CASE("similarity stats give per-functionality mean and variance") {
    CloneReference a{"a", 1, 2, 7, true}, b{"b", 1, 2, 7, true};
    std::vector<ClonePair> pairs = {{a, b, 7, 0.903}, {a, b, 7, 0.903}};
    std::vector<FunctionalityStats> stats = similarity_stats(pairs);
    REQUIRE(stats.size() == 1);
    CHECK(stats[0].similarity_mean == doctest::Approx(0.903));
    CHECK(stats[0].similarity_variance == doctest::Approx(0.0));

    std::vector<FunctionalityStats> two =
        similarity_stats({{a, b, 7, 0.8}, {a, b, 7, 1.0}});
    CHECK(two[0].similarity_mean == doctest::Approx(0.9));
    CHECK(two[0].similarity_variance == doctest::Approx(0.01));
}
