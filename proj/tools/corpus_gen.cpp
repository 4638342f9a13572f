// Deterministic generator for the bundled sample corpus: original synthetic
// prose in a wiki-like layout (headed articles, paragraphs, years, names).
// Word order is random given the bank, so a model can only lower a window's
// perplexity much below the bank entropy by memorizing that window, which is
// exactly the signal a membership audit needs at this scale.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mia/rng.hpp"

namespace {

std::vector<std::string> build_word_bank(mia::Rng& rng, std::size_t count) {
    static const char* onsets[] = {"b",  "br", "c",  "cl", "d",  "dr", "f",
                                   "g",  "gr", "h",  "j",  "k",  "l",  "m",
                                   "n",  "p",  "pl", "qu", "r",  "s",  "st",
                                   "t",  "tr", "v",  "w",  "z",  "sh", "th"};
    static const char* nuclei[] = {"a", "e", "i", "o", "u", "ai", "ea",
                                   "ie", "ou", "oa", "ee", "io"};
    static const char* codas[] = {"",   "n",  "r",  "s",  "t",  "l",  "m",
                                  "nd", "rt", "st", "ck", "ng", "sh", "x"};
    std::set<std::string> seen;
    std::vector<std::string> bank;
    while (bank.size() < count) {
        std::string w;
        int syllables = 1 + static_cast<int>(rng.bounded(3));
        for (int s = 0; s < syllables; ++s) {
            w += onsets[rng.bounded(std::size(onsets))];
            w += nuclei[rng.bounded(std::size(nuclei))];
            if (s == syllables - 1 || rng.next_unit() < 0.3) {
                w += codas[rng.bounded(std::size(codas))];
            }
        }
        if (w.size() < 3 || w.size() > 12) continue;
        if (seen.insert(w).second) bank.push_back(w);
    }
    return bank;
}

// Zipf-ish sampler over the bank: cumulative weights 1/(i+1)^s.
struct WordSampler {
    std::vector<double> cumulative;
    const std::vector<std::string>* bank;

    WordSampler(const std::vector<std::string>& words, double exponent)
        : bank(&words) {
        cumulative.reserve(words.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < words.size(); ++i) {
            acc += 1.0 / std::pow(static_cast<double>(i + 1), exponent);
            cumulative.push_back(acc);
        }
    }

    const std::string& draw(mia::Rng& rng) const {
        double u = rng.next_unit() * cumulative.back();
        auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
        return (*bank)[static_cast<std::size_t>(it - cumulative.begin())];
    }
};

std::string capitalize(std::string w) {
    if (!w.empty()) w[0] = static_cast<char>(std::toupper(w[0]));
    return w;
}

std::string make_sentence(mia::Rng& rng, const WordSampler& words,
                          const WordSampler& names, double year_prob) {
    int len = 4 + static_cast<int>(rng.bounded(10));
    std::string s;
    for (int i = 0; i < len; ++i) {
        std::string w;
        double u = rng.next_unit();
        if (u < year_prob) {
            w = std::to_string(1400 + rng.bounded(700));  // a year
        } else if (u < year_prob + 0.06) {
            w = capitalize(names.draw(rng));
        } else {
            w = words.draw(rng);
        }
        if (i == 0) w = capitalize(w);
        if (i > 0) s += (rng.next_unit() < 0.06 ? ", " : " ");
        s += w;
    }
    s += ".";
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"generate the bundled synthetic sample corpus"};
    std::string out_path = "data/corpus.txt";
    std::size_t target_bytes = 1 << 20;
    std::uint64_t seed = 31337;
    std::size_t bank_size = 1400;
    double zipf = 1.05;
    double year_prob = 0.04;
    app.add_option("--out", out_path, "output file");
    app.add_option("--bytes", target_bytes, "approximate size in bytes");
    app.add_option("--seed", seed, "generator seed");
    app.add_option("--bank", bank_size, "distinct word count");
    app.add_option("--zipf", zipf, "word-frequency skew (0 = uniform)");
    app.add_option("--years", year_prob, "per-word probability of a year token");
    CLI11_PARSE(app, argc, argv);

    mia::Rng rng(seed);
    auto bank = build_word_bank(rng, bank_size);
    // Front of the bank doubles as the name pool (Zipf's head is where
    // recurring entities belong).
    WordSampler words(bank, zipf);
    std::vector<std::string> name_pool(bank.begin(),
                                       bank.begin() + std::min<std::size_t>(160, bank.size()));
    WordSampler names(name_pool, 0.8);

    std::string text;
    text.reserve(target_bytes + 4096);
    int article = 0;
    while (text.size() < target_bytes) {
        ++article;
        text += "= " + capitalize(names.draw(rng)) + " " +
                capitalize(words.draw(rng)) + " =\n\n";
        int paragraphs = 2 + static_cast<int>(rng.bounded(4));
        for (int p = 0; p < paragraphs && text.size() < target_bytes; ++p) {
            if (p > 0 && rng.next_unit() < 0.25) {
                text += "== " + capitalize(words.draw(rng)) + " ==\n\n";
            }
            int sentences = 2 + static_cast<int>(rng.bounded(5));
            for (int s = 0; s < sentences; ++s) {
                text += make_sentence(rng, words, names, year_prob);
                text += (s == sentences - 1) ? "\n" : " ";
            }
            text += "\n";
        }
    }

    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
        std::cerr << "cannot write " << out_path << "\n";
        return 2;
    }
    std::cout << "wrote " << text.size() << " bytes (" << article
              << " articles, " << bank.size() << " distinct words) to "
              << out_path << "\n";
    return 0;
}
