// fsam/lexicon.hpp

// Copyright 2026  fsam authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fsam/common.hpp"
#include "fsam/phoneset.hpp"

namespace fsam {

using Pronunciation = std::vector<int>;  // phone ids

// Word to pronunciation map; alternates keep their file order (the first one
// is the bootstrap pronunciation).
struct Lexicon {
  std::map<std::string, std::vector<Pronunciation>> words;

  bool has(const std::string& word) const { return words.count(word) > 0; }

  const std::vector<Pronunciation>& prons(const std::string& word) const {
    auto it = words.find(word);
    if (it == words.end()) throw LexiconError("lexicon: word not found: " + word);
    return it->second;
  }

  void add(const std::string& word, Pronunciation pron) {
    if (pron.empty()) throw Error("lexicon: empty pronunciation for " + word);
    words[word].push_back(std::move(pron));
  }
};

// `WORD<TAB>ph1 ph2 ...`; repeated WORD lines add alternates.
inline Lexicon load_lexicon(const std::string& path, const PhoneSet& phones) {
  std::ifstream in(path);
  if (!in) throw ParseError("lexicon: cannot open " + path);
  Lexicon lex;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError("lexicon: " + path + ":" + std::to_string(lineno) + ": missing TAB");
    const std::string word = line.substr(0, tab);
    std::istringstream rest(line.substr(tab + 1));
    Pronunciation pron;
    std::string sym;
    while (rest >> sym) {
      const int id = phones.phone_id(sym);
      if (id < 0)
        throw ParseError("lexicon: " + path + ":" + std::to_string(lineno) +
                         ": unknown phone " + sym);
      pron.push_back(id);
    }
    if (pron.empty())
      throw ParseError("lexicon: " + path + ":" + std::to_string(lineno) +
                       ": empty pronunciation for " + word);
    lex.add(word, std::move(pron));
  }
  return lex;
}

inline void save_lexicon(const Lexicon& lex, const PhoneSet& phones, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("lexicon: cannot write " + path);
  for (const auto& [word, prons] : lex.words) {
    for (const auto& pron : prons) {
      out << word << "\t";
      for (size_t i = 0; i < pron.size(); ++i) out << (i ? " " : "") << phones.phones[pron[i]];
      out << "\n";
    }
  }
}

}  // namespace fsam
