//! The pair-scoped share/react state machine.
//!
//! Every received state share carries its own phase:
//!
//! ```text
//! Delivered ──view──▶ Viewed ──react──▶ Reacted
//!     │                  └──don't react──▶ Dismissed
//!     ├──quick react──▶ Reacted
//!     └──dismiss──────▶ Dismissed
//! ```
//!
//! Reacts themselves are terminal: they can be viewed by their addressee but
//! never reacted to.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    MessageBody, MessageId, Mode, OtterMessage, PairId, Provenance, ReactKind, ReactVia, StateKind, UserId,
};
use crate::sensing::StateList;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Delivered,
    Viewed,
    Reacted,
    Dismissed,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Reacted | Phase::Dismissed)
    }

    /// Edges of the phase DAG.
    pub fn may_become(self, next: Phase) -> bool {
        use Phase::*;
        matches!(
            (self, next),
            (Delivered, Viewed)
                | (Delivered, Reacted)
                | (Delivered, Dismissed)
                | (Viewed, Reacted)
                | (Viewed, Dismissed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InteractionError {
    #[error("user {0} is not a member of this pair")]
    NotInPair(UserId),
    #[error("state {0} is not available to share")]
    StateNotAvailable(StateKind),
    #[error("no state share {0} addressed to this user")]
    UnknownMessage(MessageId),
    #[error("share {id} is already {phase:?}")]
    AlreadyResolved { id: MessageId, phase: Phase },
    #[error("{0} is not a quick react")]
    IllegalQuickReact(ReactKind),
    #[error("{0} is a react; reacts cannot be reacted to")]
    ReactToReact(MessageId),
    #[error("share {id} is {phase:?}; {via:?} reacts need a different phase")]
    PhaseMismatch { id: MessageId, phase: Phase, via: ReactVia },
}

/// What a state share may be checked against.
#[derive(Debug, Clone, Copy)]
pub enum ShareSource<'a> {
    /// The list the sender was shown for the current window.
    List(&'a StateList),
    /// The suggestion offered by an own-state notification.
    Suggestion { state: StateKind, window_id: i64 },
}

/// Offered after viewing a partner's state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactPrompt {
    pub message: MessageId,
    pub state: StateKind,
    pub catalog: Vec<ReactKind>,
    pub quick: [ReactKind; 4],
}

impl ReactPrompt {
    fn for_share(message: MessageId, state: StateKind) -> Self {
        ReactPrompt {
            message,
            state,
            catalog: ReactKind::ALL.to_vec(),
            quick: ReactKind::QUICK,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pending {
    pub recipient: UserId,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionSession {
    pair: PairId,
    users: [UserId; 2],
    log: Vec<OtterMessage>,
    index: BTreeMap<MessageId, usize>,
    phases: BTreeMap<MessageId, Pending>,
}

impl InteractionSession {
    pub fn new(pair: PairId, a: UserId, b: UserId) -> Self {
        assert_ne!(a, b, "a pair binds two distinct users");
        InteractionSession {
            pair,
            users: [a, b],
            log: Vec::new(),
            index: BTreeMap::new(),
            phases: BTreeMap::new(),
        }
    }

    pub fn pair(&self) -> PairId {
        self.pair
    }

    pub fn users(&self) -> [UserId; 2] {
        self.users
    }

    pub fn log(&self) -> &[OtterMessage] {
        &self.log
    }

    pub fn message(&self, id: MessageId) -> Option<&OtterMessage> {
        self.index.get(&id).map(|&i| &self.log[i])
    }

    pub fn phase(&self, id: MessageId) -> Option<Phase> {
        self.phases.get(&id).map(|p| p.phase)
    }

    /// Shares addressed to `user` that are not yet reacted to or dismissed.
    pub fn pending_for(&self, user: UserId) -> impl Iterator<Item = (MessageId, Phase)> + '_ {
        self.phases
            .iter()
            .filter(move |(_, p)| p.recipient == user && !p.phase.is_terminal())
            .map(|(id, p)| (*id, p.phase))
    }

    pub fn partner_of(&self, user: UserId) -> Result<UserId, InteractionError> {
        match self.users {
            [a, b] if a == user => Ok(b),
            [a, b] if b == user => Ok(a),
            _ => Err(InteractionError::NotInPair(user)),
        }
    }

    fn append(&mut self, msg: OtterMessage) {
        self.index.insert(msg.id, self.log.len());
        self.log.push(msg);
    }

    pub fn share_state(
        &mut self,
        sender: UserId,
        state: StateKind,
        source: ShareSource<'_>,
        id: MessageId,
        now: Timestamp,
    ) -> Result<OtterMessage, InteractionError> {
        let recipient = self.partner_of(sender)?;
        let (window_id, provenance) = match source {
            ShareSource::List(list) => {
                if !list.contains(state) {
                    return Err(InteractionError::StateNotAvailable(state));
                }
                let provenance = match list.mode {
                    Mode::SensingOn => Provenance::SensedList,
                    Mode::SensingOff => Provenance::RandomList,
                };
                (list.window_id, provenance)
            }
            ShareSource::Suggestion {
                state: offered,
                window_id,
            } => {
                if offered != state {
                    return Err(InteractionError::StateNotAvailable(state));
                }
                (window_id, Provenance::NotificationShare)
            }
        };
        let msg = OtterMessage {
            id,
            pair: self.pair,
            sender,
            body: MessageBody::StateShare { state, window_id },
            sent_at: now,
            provenance,
        };
        self.append(msg);
        self.phases.insert(
            id,
            Pending {
                recipient,
                phase: Phase::Delivered,
            },
        );
        Ok(msg)
    }

    /// Resolves `id` to a state share addressed to `receiver`.
    fn addressed_share(&self, receiver: UserId, id: MessageId) -> Result<(StateKind, Pending), InteractionError> {
        self.partner_of(receiver)?;
        let msg = self.message(id).ok_or(InteractionError::UnknownMessage(id))?;
        if !msg.is_state_share() {
            return Err(InteractionError::ReactToReact(id));
        }
        let pending = self.phases[&id];
        if pending.recipient != receiver {
            return Err(InteractionError::UnknownMessage(id));
        }
        Ok((msg.state().expect("checked above"), pending))
    }

    /// Opens a received state. Re-viewing a share that is still open returns
    /// the same prompt.
    pub fn view_state(&mut self, receiver: UserId, id: MessageId) -> Result<ReactPrompt, InteractionError> {
        let (state, pending) = self.addressed_share(receiver, id).map_err(|e| match e {
            // A react is not something one views in order to react to.
            InteractionError::ReactToReact(id) => InteractionError::UnknownMessage(id),
            other => other,
        })?;
        match pending.phase {
            Phase::Delivered => self.set_phase(id, Phase::Viewed),
            Phase::Viewed => {}
            phase => return Err(InteractionError::AlreadyResolved { id, phase }),
        }
        Ok(ReactPrompt::for_share(id, state))
    }

    pub fn send_react(
        &mut self,
        receiver: UserId,
        id: MessageId,
        react: ReactKind,
        via: ReactVia,
        new_id: MessageId,
        now: Timestamp,
    ) -> Result<OtterMessage, InteractionError> {
        let (_, pending) = self.addressed_share(receiver, id)?;
        if pending.phase.is_terminal() {
            return Err(InteractionError::AlreadyResolved {
                id,
                phase: pending.phase,
            });
        }
        if via == ReactVia::Quick && !react.is_quick() {
            return Err(InteractionError::IllegalQuickReact(react));
        }
        let expected = match via {
            ReactVia::Quick => Phase::Delivered,
            ReactVia::InApp => Phase::Viewed,
        };
        if pending.phase != expected {
            return Err(InteractionError::PhaseMismatch {
                id,
                phase: pending.phase,
                via,
            });
        }
        let msg = OtterMessage {
            id: new_id,
            pair: self.pair,
            sender: receiver,
            body: MessageBody::ReactShare { react, references: id },
            sent_at: now,
            provenance: via.provenance(),
        };
        self.append(msg);
        self.set_phase(id, Phase::Reacted);
        Ok(msg)
    }

    pub fn dont_react(&mut self, receiver: UserId, id: MessageId) -> Result<(), InteractionError> {
        let (_, pending) = self.addressed_share(receiver, id).map_err(|e| match e {
            InteractionError::ReactToReact(id) => InteractionError::UnknownMessage(id),
            other => other,
        })?;
        if pending.phase.is_terminal() {
            return Err(InteractionError::AlreadyResolved {
                id,
                phase: pending.phase,
            });
        }
        self.set_phase(id, Phase::Dismissed);
        Ok(())
    }

    /// The react and the state it answers, for the user who sent that state.
    pub fn view_react(
        &self,
        original_sender: UserId,
        id: MessageId,
    ) -> Result<(ReactKind, StateKind), InteractionError> {
        self.partner_of(original_sender)?;
        let msg = self.message(id).ok_or(InteractionError::UnknownMessage(id))?;
        let (react, references) = msg.react().ok_or(InteractionError::UnknownMessage(id))?;
        if msg.sender == original_sender {
            return Err(InteractionError::UnknownMessage(id));
        }
        let state = self
            .message(references)
            .and_then(OtterMessage::state)
            .expect("reacts only reference state shares");
        Ok((react, state))
    }

    fn set_phase(&mut self, id: MessageId, next: Phase) {
        let entry = self.phases.get_mut(&id).expect("phase exists for every share");
        debug_assert!(entry.phase.may_become(next), "{:?} -> {:?}", entry.phase, next);
        entry.phase = next;
    }

    /// Number of shares in the Reacted phase.
    pub fn reacted_count(&self) -> usize {
        self.phases.values().filter(|p| p.phase == Phase::Reacted).count()
    }
}
