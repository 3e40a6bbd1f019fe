// Synthetic Java corpus for pipeline, training and acceptance tests: a few
// clone-method templates cloned across many files, plus randomized filler so
// every file hashes differently and non-clone text stays unpredictable.
#pragma once

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "clonelm/corpus.hpp"
#include "clonelm/util.hpp"

namespace fixture {

struct Template {
    int functionality_id;
    const char* name;  // the token that precedes the clone via a call site
    std::vector<std::string> body_lines;
};

inline const std::vector<Template>& templates() {
    static const std::vector<Template> all = {
        {1,
         "CopyFile",
         {"public static void copyFile(File src, File dst) throws IOException {",
          "    InputStream in = new FileInputStream(src);",
          "    OutputStream out = new FileOutputStream(dst);",
          "    byte[] buf = new byte[1024];",
          "    int len;",
          "    while ((len = in.read(buf)) > 0) {",
          "        out.write(buf, 0, len);",
          "    }",
          "    in.close();",
          "    out.close();",
          "}"}},
        {2,
         "TestPalindrome",
         {"public static boolean testPalindrome(String word) {",
          "    int left = 0;",
          "    int right = word.length() - 1;",
          "    while (left < right) {",
          "        if (word.charAt(left) != word.charAt(right)) {",
          "            return false;",
          "        }",
          "        left++;",
          "        right--;",
          "    }",
          "    return true;",
          "}"}},
        {3,
         "BubbleSort",
         {"public static void bubbleSort(int[] data) {",
          "    for (int i = 0; i < data.length - 1; i++) {",
          "        for (int j = 0; j < data.length - i - 1; j++) {",
          "            if (data[j] > data[j + 1]) {",
          "                int tmp = data[j];",
          "                data[j] = data[j + 1];",
          "                data[j + 1] = tmp;",
          "            }",
          "        }",
          "    }",
          "}"}},
        {4,
         "Factorial",
         {"public static long factorial(int n) {",
          "    long result = 1;",
          "    for (int i = 2; i <= n; i++) {",
          "        result = result * i;",
          "    }",
          "    return result;",
          "}"}},
        {5,
         "BinarySearch",
         {"public static int binarySearch(int[] sorted, int key) {",
          "    int low = 0;",
          "    int high = sorted.length - 1;",
          "    while (low <= high) {",
          "        int mid = (low + high) / 2;",
          "        if (sorted[mid] == key) {",
          "            return mid;",
          "        } else if (sorted[mid] < key) {",
          "            low = mid + 1;",
          "        } else {",
          "            high = mid - 1;",
          "        }",
          "    }",
          "    return -1;",
          "}"}},
    };
    return all;
}

struct GeneratedFile {
    std::string relative_path;
    clonelm::corpus::CloneReference ref;
};

struct Corpus {
    std::string root;
    std::vector<GeneratedFile> files;
    std::string refs_path;
    std::string pairs_path;
};

// Random two-letter identifiers keep the filler genuinely unpredictable
// without growing the subword vocabulary (they split into characters).
inline std::string random_identifier(clonelm::Rng& rng) {
    std::string name;
    name += static_cast<char>('a' + rng.below(26));
    name += static_cast<char>('a' + rng.below(26));
    return name;
}

inline std::vector<std::string> random_statements(clonelm::Rng& rng,
                                                  std::size_t count) {
    std::vector<std::string> lines;
    for (std::size_t s = 0; s < count; ++s) {
        std::string a = random_identifier(rng);
        std::string b = random_identifier(rng);
        std::string num = std::to_string(100 + rng.below(900));
        switch (rng.below(5)) {
            case 0:
                lines.push_back("        int " + a + " = " + num + ";");
                break;
            case 1:
                lines.push_back("        String " + a + " = \"s" + num + "\";");
                break;
            case 2:
                lines.push_back("        " + a + "." + b + "(" + num + ");");
                break;
            case 3:
                lines.push_back("        if (" + a + " > " + num + ") { " + a +
                                " = " + b + "; }");
                break;
            default:
                lines.push_back("        " + a + " = " + b + " + " + num + ";");
                break;
        }
    }
    return lines;
}

// One file: class header, a filler method of seeded random statements ending
// with a call to the template (so the method name precedes <soc> in every
// nearby context window), the clone method itself, then a second filler
// method so the non-clone text after the clone is unpredictable too.
inline std::string render_file(const Template& tpl, std::size_t file_index,
                               clonelm::Rng& rng, std::size_t& clone_start,
                               std::size_t& clone_end) {
    std::vector<std::string> lines;
    lines.push_back("public class " + std::string(tpl.name) + "Prog" +
                    std::to_string(file_index) + " {");
    lines.push_back("    void setup() {");
    for (std::string& stmt : random_statements(rng, 3 + rng.below(3)))
        lines.push_back(std::move(stmt));
    lines.push_back("        " + std::string(tpl.name) + ".run();");
    lines.push_back("    }");

    clone_start = lines.size() + 1;  // 1-based
    for (const std::string& body : tpl.body_lines) lines.push_back("    " + body);
    clone_end = lines.size();

    lines.push_back("    void teardown() {");
    for (std::string& stmt : random_statements(rng, 2 + rng.below(2)))
        lines.push_back(std::move(stmt));
    lines.push_back("    }");
    lines.push_back("}");

    std::string text;
    for (const std::string& l : lines) {
        text += l;
        text += '\n';
    }
    return text;
}

// files_per_functionality: functionality id (1..5) -> file count
inline Corpus write_corpus(const std::string& root,
                           const std::map<int, int>& files_per_functionality,
                           std::uint64_t seed) {
    namespace fs = std::filesystem;
    Corpus corpus;
    corpus.root = root;
    fs::create_directories(root);

    clonelm::Rng rng(seed);
    std::string refs_tsv;
    std::string pairs_tsv;

    for (const auto& [fid, count] : files_per_functionality) {
        const Template& tpl = templates().at(static_cast<std::size_t>(fid - 1));
        fs::create_directories(root + "/" + std::to_string(fid));
        std::vector<clonelm::corpus::CloneReference> fid_refs;
        for (int i = 0; i < count; ++i) {
            std::size_t start = 0, end = 0;
            std::string text = render_file(tpl, static_cast<std::size_t>(i), rng,
                                           start, end);
            std::string rel = std::to_string(fid) + "/" +
                              std::string(tpl.name) + std::to_string(i) + ".java";
            clonelm::write_file(root + "/" + rel, text);

            clonelm::corpus::CloneReference ref{rel, start, end, fid, true};
            corpus.files.push_back({rel, ref});
            fid_refs.push_back(ref);
            refs_tsv += clonelm::corpus::to_tsv_row(ref) + "\n";
        }
        // clone pairs between consecutive files, jittered similarity
        for (std::size_t i = 0; i + 1 < fid_refs.size(); ++i) {
            double sim = 0.85 + static_cast<double>(rng.below(100)) / 1000.0;
            clonelm::corpus::ClonePair pair{fid_refs[i], fid_refs[i + 1], fid, sim};
            pairs_tsv += clonelm::corpus::to_tsv_row(pair) + "\n";
        }
    }

    corpus.refs_path = root + "/refs.tsv";
    corpus.pairs_path = root + "/pairs.tsv";
    clonelm::write_file(corpus.refs_path, refs_tsv);
    clonelm::write_file(corpus.pairs_path, pairs_tsv);
    return corpus;
}

// fresh scratch directory under the system temp dir
inline std::string scratch_dir(const std::string& tag) {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() /
                   ("clonelm_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

}  // namespace fixture
