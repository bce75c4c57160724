// fsam/fsam.hpp

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

#include "fsam/cli.hpp"
#include "fsam/common.hpp"
#include "fsam/config.hpp"
#include "fsam/corpus.hpp"
#include "fsam/decode.hpp"
#include "fsam/eval.hpp"
#include "fsam/flatstart.hpp"
#include "fsam/graph.hpp"
#include "fsam/lexicon.hpp"
#include "fsam/matrix.hpp"
#include "fsam/network.hpp"
#include "fsam/numerics.hpp"
#include "fsam/phoneset.hpp"
#include "fsam/statetying.hpp"
#include "fsam/training.hpp"
