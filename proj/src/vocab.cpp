#include "grpolab/vocab.hpp"

#include <set>
#include <stdexcept>

namespace grpolab {

const std::string& Vocab::name(Token t) const {
    if (!contains(t)) throw std::out_of_range("token id out of vocab range");
    return tokens[static_cast<std::size_t>(t)];
}

Token Vocab::id_of(const std::string& n) const {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] == n) return static_cast<Token>(i);
    }
    return -1;
}

void Vocab::validate() const {
    if (size() < 2) throw std::invalid_argument("vocab: size must be >= 2");
    if (!contains(bos)) throw std::invalid_argument("vocab: BOS id out of range");
    if (!contains(eos)) throw std::invalid_argument("vocab: EOS id out of range");
    if (bos == eos) throw std::invalid_argument("vocab: BOS and EOS must differ");
    std::set<std::string> seen(tokens.begin(), tokens.end());
    if (seen.size() != tokens.size()) throw std::invalid_argument("vocab: duplicate token names");
}

std::string Vocab::render(const TokenSeq& seq, const std::string& sep) const {
    std::string out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i) out += sep;
        out += contains(seq[i]) ? tokens[static_cast<std::size_t>(seq[i])] : "<?>";
    }
    return out;
}

}  // namespace grpolab
