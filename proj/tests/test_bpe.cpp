#include <map>
#include <random>

#include "doctest.h"
#include "synergy/bpe.hpp"

using namespace synergy;
using namespace synergy::bpe;

namespace {

// Brute-force most-frequent adjacent pair with the lexicographic tie rule.
std::pair<int, int> best_pair_oracle(const std::vector<int>& seq) {
    std::map<std::pair<int, int>, int> counts;
    for (size_t i = 0; i + 1 < seq.size(); ++i) ++counts[{seq[i], seq[i + 1]}];
    std::pair<int, int> best{};
    int best_count = -1;
    for (const auto& [p, c] : counts)
        if (c > best_count) {
            best = p;
            best_count = c;
        }
    return best;
}

std::string random_bytes(std::mt19937_64& rng, int max_len) {
    const int n = std::uniform_int_distribution<int>(0, max_len)(rng);
    std::string s;
    for (int i = 0; i < n; ++i)
        s.push_back(static_cast<char>(std::uniform_int_distribution<int>(0, 255)(rng)));
    return s;
}

}  // namespace

TEST_CASE("bpe_train first merge on aaaa") {
    auto vocab = bpe_train("aaaa", 257);
    REQUIRE(vocab.merges.size() == 1);
    CHECK(vocab.merges[0] == std::pair<int, int>{97, 97});
    CHECK(vocab.token_bytes[256] == "aa");
}

TEST_CASE("bpe_train merge order on abab") {
    auto vocab = bpe_train("abab", 258);
    REQUIRE(vocab.merges.size() == 2);
    CHECK(vocab.merges[0] == std::pair<int, int>{97, 98});
    CHECK(vocab.merges[1] == std::pair<int, int>{256, 256});
    CHECK(vocab.token_bytes[257] == "abab");
}

TEST_CASE("bpe_train merges match the brute-force pair oracle") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        std::string corpus;
        for (int i = 0; i < 200; ++i)
            corpus.push_back(static_cast<char>('a' + std::uniform_int_distribution<int>(0, 3)(rng)));
        // replay training step by step against the oracle
        std::vector<int> seq;
        for (char c : corpus) seq.push_back(static_cast<unsigned char>(c));
        auto vocab = bpe_train(corpus, 261);
        for (size_t mi = 0; mi < vocab.merges.size(); ++mi) {
            CHECK(vocab.merges[mi] == best_pair_oracle(seq));
            // apply to the oracle sequence the same way
            std::vector<int> next;
            for (size_t i = 0; i < seq.size();) {
                if (i + 1 < seq.size() && seq[i] == vocab.merges[mi].first &&
                    seq[i + 1] == vocab.merges[mi].second) {
                    next.push_back(256 + static_cast<int>(mi));
                    i += 2;
                } else {
                    next.push_back(seq[i++]);
                }
            }
            seq = next;
        }
    }
}

TEST_CASE("bpe_train rejects bad input") {
    CHECK_THROWS_AS(bpe_train("abc", 256), SynergyError);
    CHECK_THROWS_AS(bpe_train("a", 300), SynergyError);
}

TEST_CASE("bpe_encode with no merges equals raw bytes") {
    BpeVocab vocab;
    vocab.token_bytes.resize(256);
    for (int i = 0; i < 256; ++i) vocab.token_bytes[i] = std::string(1, static_cast<char>(i));
    auto ids = bpe_encode("hello", vocab);
    CHECK(ids == std::vector<int>{'h', 'e', 'l', 'l', 'o'});
}

TEST_CASE("bpe_encode applies recorded merges") {
    auto vocab = bpe_train("aaaa", 257);
    CHECK(bpe_encode("aaaa", vocab) == std::vector<int>{256, 256});
}

TEST_CASE("bpe round trip is exact on random byte strings") {
    std::mt19937_64 rng(12);
    auto vocab = bpe_train("the quick brown fox jumps over the lazy dog. "
                           "pack my box with five dozen liquor jugs. ",
                           280);
    for (int i = 0; i < 2000; ++i) {
        const std::string s = random_bytes(rng, 64);
        CHECK(bpe_decode(bpe_encode(s, vocab), vocab) == s);
    }
}

TEST_CASE("vocab file round trip") {
    auto vocab = bpe_train("banana bandana banana", 262);
    const std::string path = "/tmp/synergy_test_vocab.bin";
    save_vocab(path, vocab);
    auto loaded = load_vocab(path);
    CHECK(loaded.merges == vocab.merges);
    CHECK(loaded.token_bytes == vocab.token_bytes);
}

TEST_CASE("token_bytes round-trips through constituents") {
    auto vocab = bpe_train("abcabcabc", 260);
    for (size_t id = 256; id < vocab.token_bytes.size(); ++id) {
        const auto& [a, b] = vocab.merges[id - 256];
        CHECK(vocab.token_bytes[id] ==
              vocab.token_bytes[static_cast<size_t>(a)] + vocab.token_bytes[static_cast<size_t>(b)]);
    }
}
