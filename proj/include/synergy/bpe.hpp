#pragma once

// Byte-level BPE trainer/encoder used by the dense baseline. Base alphabet
// is the 256 byte values; merged tokens get ids 256, 257, ... in merge order.
// Note these ids live in the BPE model's own vocabulary, separate from the
// byte model's special-token ids.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "synergy/common.hpp"

namespace synergy::bpe {

struct BpeVocab {
    // merges[i] created token id 256 + i from the pair
    std::vector<std::pair<int, int>> merges;
    // byte string of every token id (0..255 are single bytes)
    std::vector<std::string> token_bytes;

    int vocab_size() const { return static_cast<int>(token_bytes.size()); }
};

// Greedy highest-frequency pair merges until vocab_size is reached.
// Pair counts use standard adjacent counting over the working sequence;
// ties break toward the lexicographically smallest (left, right) pair.
BpeVocab bpe_train(std::string_view corpus_bytes, int vocab_size);

std::vector<int> bpe_encode(std::string_view text, const BpeVocab& vocab);
std::string bpe_decode(const std::vector<int>& ids, const BpeVocab& vocab);

// Versioned binary file (layout in docs/FORMATS.md).
void save_vocab(const std::string& path, const BpeVocab& vocab);
BpeVocab load_vocab(const std::string& path);

}  // namespace synergy::bpe
