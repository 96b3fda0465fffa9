use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::critic::{parse_verdict, CriticVerdict};
use super::{
    apply_assessment, check_step_preconditions, Assessment, EnvError, Environment, Transition,
};
use crate::action::{ActionSpace, Dataset, DialogueAct};
use crate::dialogue::DialogueState;
use crate::llm::{ChatMessage, ChatRequest, LlmClient};
use crate::prompts::{render, PromptSet, ScenarioConfig, TemplateRole};
use crate::reward::{EnvSignal, RewardSpec};

fn default_model() -> String {
    "gpt-3.5-turbo".to_string()
}

fn default_sim_temperature() -> f64 {
    0.7
}

fn default_max_tokens() -> u32 {
    128
}

fn default_true() -> bool {
    true
}

/// Model and sampling settings for the three simulated roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmEnvConfig {
    #[serde(default = "default_model")]
    pub system_model: String,
    #[serde(default = "default_model")]
    pub user_model: String,
    #[serde(default = "default_model")]
    pub critic_model: String,
    #[serde(default = "default_sim_temperature")]
    pub system_temperature: f64,
    #[serde(default = "default_sim_temperature")]
    pub user_temperature: f64,
    #[serde(default)]
    pub critic_temperature: f64,
    pub prompt_set: Dataset,
    #[serde(default = "default_true")]
    pub cache_enabled: bool,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

impl LlmEnvConfig {
    pub fn new(prompt_set: Dataset) -> Self {
        LlmEnvConfig {
            system_model: default_model(),
            user_model: default_model(),
            critic_model: default_model(),
            system_temperature: default_sim_temperature(),
            user_temperature: default_sim_temperature(),
            critic_temperature: 0.0,
            prompt_set,
            cache_enabled: true,
            max_tokens: default_max_tokens(),
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        for (role, model) in [
            ("system", &self.system_model),
            ("user", &self.user_model),
            ("critic", &self.critic_model),
        ] {
            if model.trim().is_empty() {
                return Err(EnvError::InvalidConfig(format!("{role}_model is empty")));
            }
        }
        for (role, t) in [
            ("system", self.system_temperature),
            ("user", self.user_temperature),
            ("critic", self.critic_temperature),
        ] {
            if !(0.0..=2.0).contains(&t) {
                return Err(EnvError::InvalidConfig(format!(
                    "{role}_temperature {t} outside [0, 2]"
                )));
            }
        }
        if self.max_tokens == 0 {
            return Err(EnvError::InvalidConfig("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// Environment backed by three prompted LLM roles: the assistant simulator
/// speaks for the system, the user simulator for the user, and the critic
/// judges whether the user's goal has been reached.
#[derive(Debug)]
pub struct LlmEnvironment {
    scenario: ScenarioConfig,
    prompts: PromptSet,
    space: ActionSpace,
    client: Arc<LlmClient>,
    config: LlmEnvConfig,
    reward: RewardSpec,
    opening: (String, Option<String>),
}

impl LlmEnvironment {
    pub fn new(
        scenario: ScenarioConfig,
        prompts: PromptSet,
        space: ActionSpace,
        client: Arc<LlmClient>,
        config: LlmEnvConfig,
        reward: &RewardSpec,
    ) -> Result<Self, EnvError> {
        config.validate()?;
        if prompts.dataset != scenario.dataset || config.prompt_set != scenario.dataset {
            return Err(EnvError::InvalidConfig(format!(
                "scenario `{}` is {} but the prompt set is {}",
                scenario.id,
                scenario.dataset.as_str(),
                config.prompt_set.as_str()
            )));
        }
        scenario.validate(&prompts)?;
        let opening = prompts.render_opening(&scenario)?;
        let reward = match scenario.max_turns {
            Some(n) => reward.with_max_turns(n),
            None => reward.clone(),
        };
        reward
            .validate()
            .map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        Ok(LlmEnvironment {
            scenario,
            prompts,
            space,
            client,
            config,
            reward,
            opening,
        })
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }

    fn request(&self, model: &str, temperature: f64, messages: Vec<ChatMessage>, seed: u64) -> ChatRequest {
        ChatRequest {
            model: model.to_string(),
            messages,
            temperature,
            max_tokens: self.config.max_tokens,
            seed: Some(seed),
        }
    }

    fn complete(&self, req: ChatRequest) -> Result<String, EnvError> {
        Ok(self.client.complete(&req)?.trim().to_string())
    }

    fn system_turn(
        &self,
        state: &DialogueState,
        act: &DialogueAct,
        rng: &mut dyn RngCore,
    ) -> Result<DialogueState, EnvError> {
        check_step_preconditions(self, state, act)?;
        let template = self.prompts.template(TemplateRole::AssistantSim)?;
        let messages = render(template, &self.scenario, Some(act), state)?;
        let req = self.request(
            &self.config.system_model,
            self.config.system_temperature,
            messages,
            rng.next_u64(),
        );
        let text = self.complete(req)?;
        let mut next = state.clone();
        next.push_system(&act.id, text)?;
        Ok(next)
    }
}

impl Environment for LlmEnvironment {
    fn scenario_id(&self) -> &str {
        &self.scenario.id
    }

    fn action_space(&self) -> &ActionSpace {
        &self.space
    }

    fn reward_spec(&self) -> &RewardSpec {
        &self.reward
    }

    fn initial_state(&self) -> DialogueState {
        DialogueState::open(
            self.scenario.id.clone(),
            self.opening.0.clone(),
            self.opening.1.clone(),
        )
    }

    fn live_opening(&self) -> DialogueState {
        DialogueState::open(self.scenario.id.clone(), self.opening.0.clone(), None)
    }

    fn step(
        &self,
        state: &DialogueState,
        act: &DialogueAct,
        rng: &mut dyn RngCore,
    ) -> Result<Transition, EnvError> {
        let mut next = self.system_turn(state, act, rng)?;
        let template = self.prompts.template(TemplateRole::UserSim)?;
        let messages = render(template, &self.scenario, None, &next)?;
        let req = self.request(
            &self.config.user_model,
            self.config.user_temperature,
            messages,
            rng.next_u64(),
        );
        let reply = self.complete(req)?;
        next.push_user(reply)?;
        let assessment = self.assess_user(&next)?;
        apply_assessment(&mut next, assessment, &self.reward);
        Ok(Transition {
            state: next,
            signal: assessment.signal,
        })
    }

    fn respond(
        &self,
        state: &DialogueState,
        act: &DialogueAct,
        rng: &mut dyn RngCore,
    ) -> Result<DialogueState, EnvError> {
        self.system_turn(state, act, rng)
    }

    fn assess_user(&self, state: &DialogueState) -> Result<Assessment, EnvError> {
        let template = self.prompts.template(TemplateRole::Critic)?;
        let messages = render(template, &self.scenario, None, state)?;
        // Fixed seed: the verdict is a function of the transcript alone.
        let req = self.request(
            &self.config.critic_model,
            self.config.critic_temperature,
            messages,
            0,
        );
        let text = self.complete(req)?;
        Ok(match parse_verdict(self.scenario.dataset, &text) {
            Some(CriticVerdict::Solved) => Assessment::signal(EnvSignal::UserSolved),
            Some(CriticVerdict::Ongoing) => Assessment::ongoing(),
            Some(CriticVerdict::Rejected) => Assessment::signal(EnvSignal::DealRejected),
            Some(CriticVerdict::Deal { price }) => {
                if price.is_none() {
                    log::warn!(
                        "scenario `{}`: critic confirmed a deal without a readable price: {text:?}",
                        self.scenario.id
                    );
                }
                Assessment {
                    signal: EnvSignal::DealReached,
                    deal_price: price,
                    price_invalid: price.is_none(),
                }
            }
            None => {
                log::warn!(
                    "scenario `{}`: malformed critic verdict {text:?}; treating as Ongoing",
                    self.scenario.id
                );
                Assessment::ongoing()
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::{Speaker, Terminal};
    use crate::llm::{MockRule, MockSpec, MockTransport, ResponseCache};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scenario() -> ScenarioConfig {
        ScenarioConfig::new(
            "es",
            Dataset::EsConv,
            [
                ("situation", "I feel anxious about work."),
                ("emotion_type", "anxiety"),
                ("problem_type", "job crisis"),
            ],
        )
    }

    fn env_with(critic_reply: &str) -> (LlmEnvironment, Arc<MockTransport>) {
        let mock = Arc::new(MockTransport::from_spec(MockSpec::Rules {
            rules: vec![
                MockRule {
                    contains: Some("impartial observer".into()),
                    last_contains: None,
                    reply: critic_reply.into(),
                },
                MockRule {
                    contains: Some("You are the patient".into()),
                    last_contains: None,
                    reply: "That helps a bit.".into(),
                },
            ],
            default: "How are you coping?".into(),
        }));
        let client = Arc::new(
            LlmClient::new(mock.clone()).with_cache(Arc::new(ResponseCache::in_memory())),
        );
        let env = LlmEnvironment::new(
            scenario(),
            PromptSet::bundled(Dataset::EsConv),
            ActionSpace::canonical(Dataset::EsConv),
            client,
            LlmEnvConfig::new(Dataset::EsConv),
            &RewardSpec::default(),
        )
        .unwrap();
        (env, mock)
    }

    #[test]
    fn step_appends_one_pair() {
        let (env, _) = env_with("Ongoing");
        let s0 = env.initial_state();
        let act = env.action_space().act_at(0).clone();
        let t = env.step(&s0, &act, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(t.state.history.len(), s0.history.len() + 2);
        let tail = &t.state.history[s0.history.len()..];
        assert_eq!(tail[0].speaker, Speaker::System);
        assert_eq!(tail[0].text, "How are you coping?");
        assert_eq!(tail[0].act.as_deref(), Some(act.id.as_str()));
        assert_eq!(tail[1].speaker, Speaker::User);
        assert_eq!(tail[1].text, "That helps a bit.");
        assert_eq!(t.signal, EnvSignal::UserOngoing);
        assert_eq!(s0, env.initial_state());
    }

    #[test]
    fn critic_solved() {
        let (env, _) = env_with("Solved");
        let act = env.action_space().act_at(0).clone();
        let t = env
            .step(&env.initial_state(), &act, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        assert_eq!(t.signal, EnvSignal::UserSolved);
        assert_eq!(t.state.terminal, Terminal::Solved);
    }

    #[test]
    fn malformed_critic_fails_open() {
        let (env, _) = env_with("Probably the patient feels better now.");
        let act = env.action_space().act_at(0).clone();
        let t = env
            .step(&env.initial_state(), &act, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        assert_eq!(t.signal, EnvSignal::UserOngoing);
        assert_eq!(t.state.terminal, Terminal::Ongoing);
    }

    #[test]
    fn seeded_steps_hit_cache() {
        let (env, mock) = env_with("Ongoing");
        let act = env.action_space().act_at(2).clone();
        let a = env.step(&env.initial_state(), &act, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let calls = mock.calls();
        let b = env.step(&env.initial_state(), &act, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(mock.calls(), calls);
    }

    #[test]
    fn config_validation() {
        let mut cfg = LlmEnvConfig::new(Dataset::EsConv);
        cfg.user_temperature = 2.5;
        assert!(cfg.validate().is_err());
        let mut cfg = LlmEnvConfig::new(Dataset::EsConv);
        cfg.critic_model = " ".into();
        assert!(cfg.validate().is_err());
        let cfg: LlmEnvConfig = serde_json::from_str(r#"{"prompt_set":"ESConv"}"#).unwrap();
        assert_eq!(cfg.critic_temperature, 0.0);
        assert_eq!(cfg.system_temperature, 0.7);
        cfg.validate().unwrap();
    }
}
