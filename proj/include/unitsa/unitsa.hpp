#pragma once

#include "unitsa/augment/augment.hpp"
#include "unitsa/baselines/controllers.hpp"
#include "unitsa/common.hpp"
#include "unitsa/encoder/state.hpp"
#include "unitsa/harness/commands.hpp"
#include "unitsa/harness/report.hpp"
#include "unitsa/harness/scenario_io.hpp"
#include "unitsa/lora/lora.hpp"
#include "unitsa/nn/adam.hpp"
#include "unitsa/nn/checkpoint.hpp"
#include "unitsa/nn/dense.hpp"
#include "unitsa/nn/extractors.hpp"
#include "unitsa/nn/policy.hpp"
#include "unitsa/nn/policy_io.hpp"
#include "unitsa/nn/tensor.hpp"
#include "unitsa/ppo/agent.hpp"
#include "unitsa/ppo/loss.hpp"
#include "unitsa/ppo/trainer.hpp"
#include "unitsa/rng.hpp"
#include "unitsa/sim/config.hpp"
#include "unitsa/sim/environment.hpp"
#include "unitsa/sim/movement.hpp"
#include "unitsa/sim/presets.hpp"
#include "unitsa/sim/scenario.hpp"
