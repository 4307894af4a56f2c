//! JavaScript surface. Views and frames cross the boundary as JSON text.

use wasm_bindgen::prelude::*;

use crate::demo::Demo;
use crate::view::Verb;

#[wasm_bindgen]
pub struct WebDemo {
    inner: Demo,
}

#[wasm_bindgen]
impl WebDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, difficulty: u8) -> Result<WebDemo, JsError> {
        Demo::new(u64::from(seed), difficulty).map(|inner| WebDemo { inner }).map_err(|e| JsError::new(&e))
    }

    /// Sends a chat instruction. False when controls are disabled or the text is blank.
    pub fn instruct(&mut self, text: &str, transcript: bool) -> bool {
        match self.inner.view().chat_frame(text, transcript) {
            Some(frame) => {
                self.inner.send(&frame);
                true
            }
            None => false,
        }
    }

    /// Approves or rejects the pending proposal card.
    pub fn decide(&mut self, approve: bool) -> bool {
        match self.inner.view().decision_frame(approve) {
            Some(frame) => {
                self.inner.send(&frame);
                true
            }
            None => false,
        }
    }

    /// Player units inside a drag rectangle of cells.
    pub fn select(&self, x0: i32, y0: i32, x1: i32, y1: i32) -> Vec<u32> {
        self.inner.view().select((x0, y0), (x1, y1)).into_iter().map(|id| id as u32).collect()
    }

    /// Orders the selection to a cell. False when the selection holds anything
    /// that is not a live player unit.
    pub fn order(&mut self, ids: &[u32], x: i32, y: i32, attack: bool) -> bool {
        let ids: Vec<u64> = ids.iter().map(|&i| u64::from(i)).collect();
        let verb = if attack { Verb::Attack } else { Verb::Move };
        match self.inner.view().unit_command_frame(&ids, (x, y), verb) {
            Some(frame) => {
                self.inner.send(&frame);
                true
            }
            None => false,
        }
    }

    pub fn advance(&mut self, ticks: u32) -> u32 {
        self.inner.advance(ticks)
    }

    #[wasm_bindgen(js_name = viewJson)]
    pub fn view_json(&self) -> String {
        serde_json::to_string(self.inner.view()).expect("view serializes")
    }

    /// Server frames emitted since the last call, as a JSON array.
    #[wasm_bindgen(js_name = takeFramesJson)]
    pub fn take_frames_json(&mut self) -> String {
        serde_json::to_string(&self.inner.take_frames()).expect("frames serialize")
    }
}
