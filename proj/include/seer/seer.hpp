#pragma once

#include "seer/config.hpp"
#include "seer/envs.hpp"
#include "seer/learner.hpp"
#include "seer/mdp.hpp"
#include "seer/oracle.hpp"
#include "seer/orchestrator.hpp"
#include "seer/persistence.hpp"
#include "seer/q_table.hpp"
#include "seer/replay_graph.hpp"
#include "seer/reward_model.hpp"
#include "seer/soft_backup.hpp"
#include "seer/teacher.hpp"
#include "seer/verification.hpp"
