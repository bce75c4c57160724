// fsam/phoneset.hpp

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
#include <string>
#include <vector>

#include "fsam/common.hpp"

namespace fsam {

// Phone inventory and the model-state index space.
//
// Every phone owns a contiguous block of model states (HMM emitting states,
// also the network's output classes). The short-pause phone is the one
// exception: its single state is tied to the middle silence state, so it
// contributes no states of its own. A set may omit the short-pause model
// entirely (short_pause == -1).
struct PhoneSet {
  std::vector<std::string> phones;  // unique symbols, includes silence (and sp)
  int silence = -1;                 // index into phones
  int short_pause = -1;             // index into phones, or -1 when absent
  int states_per_phone = 3;
  int silence_states = 3;

  int num_phones() const { return static_cast<int>(phones.size()); }

  int phone_id(const std::string& symbol) const {
    for (int i = 0; i < num_phones(); ++i)
      if (phones[i] == symbol) return i;
    return -1;
  }

  int phone_states(int phone) const {
    if (phone == short_pause) return 1;
    if (phone == silence) return silence_states;
    return states_per_phone;
  }

  // First model state of the phone's block; the short pause resolves into the
  // silence block.
  int state_offset(int phone) const {
    check_phone(phone);
    if (phone == short_pause) return state_offset(silence) + silence_states / 2;
    int off = 0;
    for (int p = 0; p < phone; ++p)
      if (p != short_pause) off += phone_states(p);
    return off;
  }

  int model_state(int phone, int pos) const {
    check_phone(phone);
    if (pos < 0 || pos >= phone_states(phone))
      throw Error("phoneset: state position " + std::to_string(pos) +
                  " out of range for phone " + phones[phone]);
    return state_offset(phone) + (phone == short_pause ? 0 : pos);
  }

  int num_model_states() const {
    int n = 0;
    for (int p = 0; p < num_phones(); ++p)
      if (p != short_pause) n += phone_states(p);
    return n;
  }

  // Inverse of model_state over the non-tied blocks.
  std::pair<int, int> state_to_phone(int state) const {
    int off = 0;
    for (int p = 0; p < num_phones(); ++p) {
      if (p == short_pause) continue;
      const int n = phone_states(p);
      if (state < off + n) return {p, state - off};
      off += n;
    }
    throw Error("phoneset: model state " + std::to_string(state) + " out of range");
  }

  void validate() const {
    if (phones.empty()) throw Error("phoneset: empty");
    if (silence < 0 || silence >= num_phones())
      throw Error("phoneset: no silence phone designated");
    if (short_pause >= num_phones()) throw Error("phoneset: bad short-pause index");
    if (short_pause == silence) throw Error("phoneset: silence and short pause collide");
    for (int i = 0; i < num_phones(); ++i)
      for (int j = i + 1; j < num_phones(); ++j)
        if (phones[i] == phones[j]) throw Error("phoneset: duplicate symbol " + phones[i]);
    if (states_per_phone < 1 || silence_states < 1)
      throw Error("phoneset: state counts must be positive");
  }

 private:
  void check_phone(int phone) const {
    if (phone < 0 || phone >= num_phones())
      throw Error("phoneset: phone id " + std::to_string(phone) + " out of range");
  }
};

// One phone symbol per line; the lines matching sil_symbol / sp_symbol
// designate the silence and short-pause models. Short pause is optional,
// silence is not.
inline PhoneSet load_phoneset(const std::string& path, int states_per_phone = 3,
                              int silence_states = 3,
                              const std::string& sil_symbol = "!SIL",
                              const std::string& sp_symbol = "!SP") {
  std::ifstream in(path);
  if (!in) throw ParseError("phoneset: cannot open " + path);
  PhoneSet ps;
  ps.states_per_phone = states_per_phone;
  ps.silence_states = silence_states;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    if (line == sil_symbol) ps.silence = static_cast<int>(ps.phones.size());
    if (line == sp_symbol) ps.short_pause = static_cast<int>(ps.phones.size());
    ps.phones.push_back(line);
  }
  if (ps.silence < 0)
    throw ParseError("phoneset: " + path + " has no silence line (" + sil_symbol + ")");
  ps.validate();
  return ps;
}

inline void save_phoneset(const PhoneSet& ps, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("phoneset: cannot write " + path);
  for (const auto& p : ps.phones) out << p << "\n";
}

}  // namespace fsam
