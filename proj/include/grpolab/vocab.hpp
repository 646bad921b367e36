#pragma once

#include <string>
#include <vector>

namespace grpolab {

using Token = int;
using TokenSeq = std::vector<Token>;

// Finite token alphabet with a sequence-start symbol (BOS, used only for
// context padding) and a response terminator (EOS). Token ids are 0..V-1.
struct Vocab {
    std::vector<std::string> tokens;  // names; index is the token id
    Token bos = 0;
    Token eos = 1;

    int size() const { return static_cast<int>(tokens.size()); }
    bool contains(Token t) const { return t >= 0 && t < size(); }
    const std::string& name(Token t) const;

    // Token id for a name, -1 if absent.
    Token id_of(const std::string& name) const;

    // Throws std::invalid_argument on a malformed vocab (V < 2, bad special
    // ids, duplicate names).
    void validate() const;

    std::string render(const TokenSeq& seq, const std::string& sep = " ") const;

    bool operator==(const Vocab&) const = default;
};

}  // namespace grpolab
