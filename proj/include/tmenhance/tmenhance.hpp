// Copyright 2026 The tmenhance Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "tmenhance/app.hpp"
#include "tmenhance/corpus_io.hpp"
#include "tmenhance/envelope_mapper.hpp"
#include "tmenhance/error.hpp"
#include "tmenhance/eval_metrics.hpp"
#include "tmenhance/excitation_mapper.hpp"
#include "tmenhance/features.hpp"
#include "tmenhance/gmm.hpp"
#include "tmenhance/lsf_codec.hpp"
#include "tmenhance/parallel.hpp"
#include "tmenhance/phones.hpp"
#include "tmenhance/signal_core.hpp"
