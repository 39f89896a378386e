#pragma once

// Corpus pipeline: UTF-8 byte tokenization, segment clipping, corpus
// splitting and batch assembly. Token ids 0..255 are raw byte values;
// special ids follow.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "synergy/common.hpp"

namespace synergy::corpus {

struct SpecialTokens {
    int bos = 256;
    int eos = 257;
    int pad = 258;
    int vocab_size() const { return 259; }
};

struct ByteSegment {
    std::vector<int> ids;   // byte values, no specials
    int64_t byte_len = 0;   // == ids.size()
};

// Exact byte values of the UTF-8 encoding, rejecting malformed input.
std::vector<int> utf8_tokenize(std::string_view text);

// Inverse of utf8_tokenize for non-special ids.
std::string detokenize(const std::vector<int>& ids);

// True iff `bytes` is well-formed UTF-8.
bool utf8_valid(std::string_view bytes);

// Clip text into segments of at most max_bytes - 2 bytes (bos/eos reserved),
// preferring whitespace split points (the boundary whitespace byte is
// dropped), falling back to the last codepoint boundary in the window.
std::vector<ByteSegment> clip_segments(std::string_view text, int64_t max_bytes);

struct CorpusSplit {
    std::vector<int64_t> train, eval, test;  // row indices
};

// Seeded shuffle split: floor(n * train_fraction) rows (at least one) go to
// train, the remainder is split evenly with eval taking the odd row.
CorpusSplit split_corpus(int64_t n_rows, double train_fraction, uint64_t seed);

struct Batch {
    int64_t batch = 0, width = 0;
    std::vector<int> ids;        // [batch, width], bos ++ seg ++ eos ++ pad...
    std::vector<uint8_t> mask;   // [batch, width], 1 where the *target* ids[i+1]
                                 // is a real token or eos
};

Batch make_batch(const std::vector<ByteSegment>& segments, int64_t context_length,
                 const SpecialTokens& sp = {});

// Same framing for pre-tokenized id sequences (BPE baseline path).
Batch make_batch_ids(const std::vector<std::vector<int>>& rows, int64_t context_length,
                     const SpecialTokens& sp, int vocab_size);

// Versioned binary shard of segments (layout in docs/FORMATS.md).
void save_segments(const std::string& path, const std::vector<ByteSegment>& segs);
std::vector<ByteSegment> load_segments(const std::string& path);

// Reads a .txt file whole, or a .jsonl file row-per-line taking the "text"
// field of each object.
std::vector<std::string> read_documents(const std::string& path);

}  // namespace synergy::corpus
