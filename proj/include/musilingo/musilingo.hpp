// Copyright 2026 The musilingo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Umbrella header. The HTTP chat client is not included here; include
// musilingo/datagen/http_client.hpp explicitly where it is needed.

#pragma once

#include "musilingo/adapter.hpp"
#include "musilingo/checkpoint.hpp"
#include "musilingo/common.hpp"
#include "musilingo/config.hpp"
#include "musilingo/data.hpp"
#include "musilingo/datagen/audit.hpp"
#include "musilingo/datagen/client.hpp"
#include "musilingo/datagen/pipeline.hpp"
#include "musilingo/datagen/prompts.hpp"
#include "musilingo/encoder.hpp"
#include "musilingo/inference.hpp"
#include "musilingo/language_model.hpp"
#include "musilingo/metrics/metrics.hpp"
#include "musilingo/metrics/text.hpp"
#include "musilingo/nn.hpp"
#include "musilingo/optim.hpp"
#include "musilingo/sequence.hpp"
#include "musilingo/toy_data.hpp"
#include "musilingo/trainer.hpp"
