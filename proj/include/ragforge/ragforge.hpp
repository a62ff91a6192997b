#pragma once

#include "ragforge/chunking.hpp"
#include "ragforge/config.hpp"
#include "ragforge/corpus.hpp"
#include "ragforge/embedding.hpp"
#include "ragforge/evaluation.hpp"
#include "ragforge/index.hpp"
#include "ragforge/metadata.hpp"
#include "ragforge/pipeline.hpp"
#include "ragforge/providers.hpp"
#include "ragforge/retrieval.hpp"
#include "ragforge/tokenizer.hpp"
