use alloc::format;

use super::{InferenceClient, InferenceRequest, Robot, SkillConfig, SkillOutcome, SkillStatus};
use crate::codec::{decode_action, CodecConfig, TokenSeq};
use crate::control::Controller;

/// Closed loop against an inference endpoint: observe, request, decode,
/// actuate, until the decoded stop flag is set.
///
/// The stop action itself is never applied. A response carrying a
/// diagnostic still drives the robot (its deltas are zero by contract),
/// but `diagnostic_patience` consecutive diagnostics fail the skill.
pub fn execute_vla_skill<R, C>(
    prompt: &str,
    robot: &mut R,
    client: &mut C,
    codec: &CodecConfig,
    config: &SkillConfig,
) -> SkillOutcome
where
    R: Robot + ?Sized,
    C: InferenceClient + ?Sized,
{
    let params = robot.params();
    let max_ticks = config.max_ticks(params.dt);
    let mut controller = Controller::with_gripper(params, robot.state().gripper_closed);
    let mut flagged = 0u32;
    let mut steps = 0u64;
    while steps < max_ticks {
        let request = InferenceRequest {
            prompt: prompt.into(),
            snapshot: robot.observe(),
            state: robot.state(),
        };
        let response = match client.infer(&request) {
            Ok(r) => r,
            Err(_) => return SkillOutcome::failed("inference unreachable", steps),
        };
        let action = match TokenSeq::from_slice(&response.tokens).and_then(|t| decode_action(&t, codec)) {
            Ok(a) => a,
            Err(_) => return SkillOutcome::failed("protocol violation", steps),
        };
        match response.diagnostic {
            Some(d) => {
                flagged += 1;
                if flagged >= config.diagnostic_patience.max(1) {
                    return SkillOutcome::failed(format!("policy diagnostic: {d}"), steps);
                }
            }
            None => flagged = 0,
        }
        if action.stop {
            return SkillOutcome {
                status: SkillStatus::Succeeded,
                steps,
                stop_tick: Some(robot.tick()),
            };
        }
        let signal = controller.map(&action, request.state.variant);
        robot.apply(&signal);
        steps += 1;
    }
    SkillOutcome {
        status: SkillStatus::Timeout,
        steps,
        stop_tick: None,
    }
}
