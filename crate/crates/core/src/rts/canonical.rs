//! Key-sorted compact JSON written straight from `Serialize`.
//!
//! The output is byte-for-byte what `serde_json::to_value(x)?.to_string()`
//! produces, without building the intermediate tree. Object entries are
//! streamed in the order they arrive and only rearranged when a key comes
//! out of order.

use std::borrow::Cow;
use std::fmt::{self, Display};
use std::io::Write;

use serde::ser::{self, Serialize};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalError(String);

impl Display for CanonicalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CanonicalError {}

impl ser::Error for CanonicalError {
    fn custom<T: Display>(msg: T) -> Self {
        CanonicalError(msg.to_string())
    }
}

type Result<T> = std::result::Result<T, CanonicalError>;

pub fn to_canonical_vec<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut c = Canon { out: Vec::with_capacity(4096) };
    value.serialize(&mut c)?;
    Ok(c.out)
}

struct Canon {
    out: Vec<u8>,
}

impl Canon {
    fn raw(&mut self, s: &str) {
        self.out.extend_from_slice(s.as_bytes());
    }

    fn string(&mut self, s: &str) -> Result<()> {
        serde_json::to_writer(&mut self.out, s).map_err(|e| CanonicalError(e.to_string()))
    }

    fn number(&mut self, n: impl Display) {
        let _ = write!(self.out, "{n}");
    }

    fn float(&mut self, v: f64) -> Result<()> {
        serde_json::to_writer(&mut self.out, &v).map_err(|e| CanonicalError(e.to_string()))
    }

    fn open_object(&mut self) -> Object<'_> {
        self.raw("{");
        let start = self.out.len();
        Object { c: self, start, entries: Vec::new(), sorted: true, key: None, close_outer: false }
    }
}

impl<'a> ser::Serializer for &'a mut Canon {
    type Ok = ();
    type Error = CanonicalError;
    type SerializeSeq = Seq<'a>;
    type SerializeTuple = Seq<'a>;
    type SerializeTupleStruct = Seq<'a>;
    type SerializeTupleVariant = Seq<'a>;
    type SerializeMap = Object<'a>;
    type SerializeStruct = Object<'a>;
    type SerializeStructVariant = Object<'a>;

    fn serialize_bool(self, v: bool) -> Result<()> {
        self.raw(if v { "true" } else { "false" });
        Ok(())
    }

    fn serialize_i8(self, v: i8) -> Result<()> {
        self.number(v);
        Ok(())
    }

    fn serialize_i16(self, v: i16) -> Result<()> {
        self.number(v);
        Ok(())
    }

    fn serialize_i32(self, v: i32) -> Result<()> {
        self.number(v);
        Ok(())
    }

    fn serialize_i64(self, v: i64) -> Result<()> {
        self.number(v);
        Ok(())
    }

    fn serialize_u8(self, v: u8) -> Result<()> {
        self.number(v);
        Ok(())
    }

    fn serialize_u16(self, v: u16) -> Result<()> {
        self.number(v);
        Ok(())
    }

    fn serialize_u32(self, v: u32) -> Result<()> {
        self.number(v);
        Ok(())
    }

    fn serialize_u64(self, v: u64) -> Result<()> {
        self.number(v);
        Ok(())
    }

    fn serialize_f32(self, v: f32) -> Result<()> {
        self.float(f64::from(v))
    }

    fn serialize_f64(self, v: f64) -> Result<()> {
        self.float(v)
    }

    fn serialize_char(self, v: char) -> Result<()> {
        self.string(v.encode_utf8(&mut [0; 4]))
    }

    fn serialize_str(self, v: &str) -> Result<()> {
        self.string(v)
    }

    fn serialize_bytes(self, v: &[u8]) -> Result<()> {
        use ser::SerializeSeq;
        let mut seq = self.serialize_seq(Some(v.len()))?;
        for b in v {
            seq.serialize_element(b)?;
        }
        seq.end()
    }

    fn serialize_none(self) -> Result<()> {
        self.serialize_unit()
    }

    fn serialize_some<T: Serialize + ?Sized>(self, value: &T) -> Result<()> {
        value.serialize(self)
    }

    fn serialize_unit(self) -> Result<()> {
        self.raw("null");
        Ok(())
    }

    fn serialize_unit_struct(self, _name: &'static str) -> Result<()> {
        self.serialize_unit()
    }

    fn serialize_unit_variant(self, _name: &'static str, _index: u32, variant: &'static str) -> Result<()> {
        self.string(variant)
    }

    fn serialize_newtype_struct<T: Serialize + ?Sized>(self, _name: &'static str, value: &T) -> Result<()> {
        value.serialize(self)
    }

    fn serialize_newtype_variant<T: Serialize + ?Sized>(
        self,
        _name: &'static str,
        _index: u32,
        variant: &'static str,
        value: &T,
    ) -> Result<()> {
        self.raw("{");
        self.string(variant)?;
        self.raw(":");
        value.serialize(&mut *self)?;
        self.raw("}");
        Ok(())
    }

    fn serialize_seq(self, _len: Option<usize>) -> Result<Seq<'a>> {
        self.raw("[");
        Ok(Seq { c: self, first: true, close_outer: false })
    }

    fn serialize_tuple(self, len: usize) -> Result<Seq<'a>> {
        self.serialize_seq(Some(len))
    }

    fn serialize_tuple_struct(self, _name: &'static str, len: usize) -> Result<Seq<'a>> {
        self.serialize_seq(Some(len))
    }

    fn serialize_tuple_variant(
        self,
        _name: &'static str,
        _index: u32,
        variant: &'static str,
        _len: usize,
    ) -> Result<Seq<'a>> {
        self.raw("{");
        self.string(variant)?;
        self.raw(":[");
        Ok(Seq { c: self, first: true, close_outer: true })
    }

    fn serialize_map(self, _len: Option<usize>) -> Result<Object<'a>> {
        Ok(self.open_object())
    }

    fn serialize_struct(self, _name: &'static str, _len: usize) -> Result<Object<'a>> {
        Ok(self.open_object())
    }

    fn serialize_struct_variant(
        self,
        _name: &'static str,
        _index: u32,
        variant: &'static str,
        _len: usize,
    ) -> Result<Object<'a>> {
        self.raw("{");
        self.string(variant)?;
        self.raw(":");
        let mut o = self.open_object();
        o.close_outer = true;
        Ok(o)
    }
}

pub struct Seq<'a> {
    c: &'a mut Canon,
    first: bool,
    close_outer: bool,
}

impl Seq<'_> {
    fn element<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<()> {
        if !self.first {
            self.c.raw(",");
        }
        self.first = false;
        value.serialize(&mut *self.c)
    }

    fn finish(self) -> Result<()> {
        self.c.raw(if self.close_outer { "]}" } else { "]" });
        Ok(())
    }
}

impl ser::SerializeSeq for Seq<'_> {
    type Ok = ();
    type Error = CanonicalError;

    fn serialize_element<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<()> {
        self.element(value)
    }

    fn end(self) -> Result<()> {
        self.finish()
    }
}

impl ser::SerializeTuple for Seq<'_> {
    type Ok = ();
    type Error = CanonicalError;

    fn serialize_element<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<()> {
        self.element(value)
    }

    fn end(self) -> Result<()> {
        self.finish()
    }
}

impl ser::SerializeTupleStruct for Seq<'_> {
    type Ok = ();
    type Error = CanonicalError;

    fn serialize_field<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<()> {
        self.element(value)
    }

    fn end(self) -> Result<()> {
        self.finish()
    }
}

impl ser::SerializeTupleVariant for Seq<'_> {
    type Ok = ();
    type Error = CanonicalError;

    fn serialize_field<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<()> {
        self.element(value)
    }

    fn end(self) -> Result<()> {
        self.finish()
    }
}

/// An object being written. `entries` holds each `"key":value` segment's
/// byte range so the object can be reordered at the end if needed.
pub struct Object<'a> {
    c: &'a mut Canon,
    start: usize,
    entries: Vec<(Cow<'static, str>, usize, usize)>,
    sorted: bool,
    key: Option<Cow<'static, str>>,
    close_outer: bool,
}

impl Object<'_> {
    fn entry<T: Serialize + ?Sized>(&mut self, key: Cow<'static, str>, value: &T) -> Result<()> {
        if !self.entries.is_empty() {
            self.c.raw(",");
        }
        let seg = self.c.out.len();
        self.c.string(&key)?;
        self.c.raw(":");
        value.serialize(&mut *self.c)?;
        if self.entries.last().is_some_and(|(k, _, _)| *k > key) {
            self.sorted = false;
        }
        self.entries.push((key, seg, self.c.out.len()));
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        if !self.sorted {
            let body = self.c.out.split_off(self.start);
            self.entries.sort_by(|a, b| a.0.cmp(&b.0));
            for (i, (_, from, to)) in self.entries.iter().enumerate() {
                if i > 0 {
                    self.c.out.push(b',');
                }
                self.c.out.extend_from_slice(&body[from - self.start..to - self.start]);
            }
        }
        self.c.raw(if self.close_outer { "}}" } else { "}" });
        Ok(())
    }
}

impl ser::SerializeMap for Object<'_> {
    type Ok = ();
    type Error = CanonicalError;

    fn serialize_key<T: Serialize + ?Sized>(&mut self, key: &T) -> Result<()> {
        self.key = Some(Cow::Owned(key.serialize(KeySer)?));
        Ok(())
    }

    fn serialize_value<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<()> {
        let key = self.key.take().ok_or_else(|| CanonicalError("map value without a key".into()))?;
        self.entry(key, value)
    }

    fn end(self) -> Result<()> {
        self.finish()
    }
}

impl ser::SerializeStruct for Object<'_> {
    type Ok = ();
    type Error = CanonicalError;

    fn serialize_field<T: Serialize + ?Sized>(&mut self, key: &'static str, value: &T) -> Result<()> {
        self.entry(Cow::Borrowed(key), value)
    }

    fn end(self) -> Result<()> {
        self.finish()
    }
}

impl ser::SerializeStructVariant for Object<'_> {
    type Ok = ();
    type Error = CanonicalError;

    fn serialize_field<T: Serialize + ?Sized>(&mut self, key: &'static str, value: &T) -> Result<()> {
        self.entry(Cow::Borrowed(key), value)
    }

    fn end(self) -> Result<()> {
        self.finish()
    }
}

/// Map keys become strings, as in `serde_json`.
struct KeySer;

fn key_only<T>() -> Result<T> {
    Err(CanonicalError("map keys must be strings, chars or integers".into()))
}

impl ser::Serializer for KeySer {
    type Ok = String;
    type Error = CanonicalError;
    type SerializeSeq = ser::Impossible<String, CanonicalError>;
    type SerializeTuple = ser::Impossible<String, CanonicalError>;
    type SerializeTupleStruct = ser::Impossible<String, CanonicalError>;
    type SerializeTupleVariant = ser::Impossible<String, CanonicalError>;
    type SerializeMap = ser::Impossible<String, CanonicalError>;
    type SerializeStruct = ser::Impossible<String, CanonicalError>;
    type SerializeStructVariant = ser::Impossible<String, CanonicalError>;

    fn serialize_bool(self, v: bool) -> Result<String> {
        Ok(v.to_string())
    }
    fn serialize_i8(self, v: i8) -> Result<String> {
        Ok(v.to_string())
    }
    fn serialize_i16(self, v: i16) -> Result<String> {
        Ok(v.to_string())
    }
    fn serialize_i32(self, v: i32) -> Result<String> {
        Ok(v.to_string())
    }
    fn serialize_i64(self, v: i64) -> Result<String> {
        Ok(v.to_string())
    }
    fn serialize_u8(self, v: u8) -> Result<String> {
        Ok(v.to_string())
    }
    fn serialize_u16(self, v: u16) -> Result<String> {
        Ok(v.to_string())
    }
    fn serialize_u32(self, v: u32) -> Result<String> {
        Ok(v.to_string())
    }
    fn serialize_u64(self, v: u64) -> Result<String> {
        Ok(v.to_string())
    }
    fn serialize_f32(self, _v: f32) -> Result<String> {
        key_only()
    }
    fn serialize_f64(self, _v: f64) -> Result<String> {
        key_only()
    }
    fn serialize_char(self, v: char) -> Result<String> {
        Ok(v.to_string())
    }
    fn serialize_str(self, v: &str) -> Result<String> {
        Ok(v.to_string())
    }
    fn serialize_bytes(self, _v: &[u8]) -> Result<String> {
        key_only()
    }
    fn serialize_none(self) -> Result<String> {
        key_only()
    }
    fn serialize_some<T: Serialize + ?Sized>(self, _value: &T) -> Result<String> {
        key_only()
    }
    fn serialize_unit(self) -> Result<String> {
        key_only()
    }
    fn serialize_unit_struct(self, _name: &'static str) -> Result<String> {
        key_only()
    }
    fn serialize_unit_variant(self, _name: &'static str, _index: u32, variant: &'static str) -> Result<String> {
        Ok(variant.to_string())
    }
    fn serialize_newtype_struct<T: Serialize + ?Sized>(self, _name: &'static str, value: &T) -> Result<String> {
        value.serialize(self)
    }
    fn serialize_newtype_variant<T: Serialize + ?Sized>(
        self,
        _name: &'static str,
        _index: u32,
        _variant: &'static str,
        _value: &T,
    ) -> Result<String> {
        key_only()
    }
    fn serialize_seq(self, _len: Option<usize>) -> Result<Self::SerializeSeq> {
        key_only()
    }
    fn serialize_tuple(self, _len: usize) -> Result<Self::SerializeTuple> {
        key_only()
    }
    fn serialize_tuple_struct(self, _name: &'static str, _len: usize) -> Result<Self::SerializeTupleStruct> {
        key_only()
    }
    fn serialize_tuple_variant(
        self,
        _name: &'static str,
        _index: u32,
        _variant: &'static str,
        _len: usize,
    ) -> Result<Self::SerializeTupleVariant> {
        key_only()
    }
    fn serialize_map(self, _len: Option<usize>) -> Result<Self::SerializeMap> {
        key_only()
    }
    fn serialize_struct(self, _name: &'static str, _len: usize) -> Result<Self::SerializeStruct> {
        key_only()
    }
    fn serialize_struct_variant(
        self,
        _name: &'static str,
        _index: u32,
        _variant: &'static str,
        _len: usize,
    ) -> Result<Self::SerializeStructVariant> {
        key_only()
    }
}
