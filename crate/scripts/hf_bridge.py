#!/usr/bin/env python3
"""Line-delimited JSON encoder bridge for the `external` backend.

    backend.kind  = external
    backend.model = python3 scripts/hf_bridge.py --model bert-base-uncased

`--stub` serves a tiny deterministic model without any third-party package,
which is what the test suite uses.
"""

import argparse
import hashlib
import json
import math
import os
import sys


class Stub:
    """Two layers, two heads, hidden size four; one subtoken per word."""

    name = "stub"
    layers, heads, hidden, max_subtokens = 2, 2, 4, 512

    def __init__(self, model_path=None):
        self.shift = 0.0
        if model_path:
            with open(os.path.join(model_path, "shift")) as f:
                self.shift = float(f.read())
        self.fingerprint = f"shift={self.shift}"

    def vector(self, word):
        digest = hashlib.sha256(word.lower().encode()).digest()
        return [b / 255.0 - 0.5 + self.shift for b in digest[: self.hidden]]

    def encode(self, words, layers):
        n = len(words) + 2
        spans = [[i + 1, i + 2] for i in range(len(words))]
        hidden = [self.vector("[CLS]")] + [self.vector(w) for w in words] + [self.vector("[SEP]")]
        attention = []
        for layer in layers:
            heads = []
            for head in range(self.heads):
                matrix = []
                for r in range(n):
                    row = [math.exp(-abs(r - c) * (1 + layer + head) / n) for c in range(n)]
                    total = sum(row)
                    matrix.append([x / total for x in row])
                heads.append(matrix)
            attention.append(heads)
        return {
            "n_subtokens": n,
            "word_spans": spans,
            "special": [0, n - 1],
            "attention": attention,
            "hidden": hidden,
        }

    def adapt(self, documents, config, run_dir):
        shift = round(len(documents) * 1e-3, 6)
        with open(os.path.join(run_dir, "shift"), "w") as f:
            f.write(str(shift))
        losses = [1.0 / (1 + e) for e in range(config.get("epochs", 1) + 1)]
        return {"losses": losses, "model_path": run_dir}


class Transformers:
    def __init__(self, name, model_path=None):
        import torch
        from transformers import AutoModel, AutoTokenizer

        self.torch = torch
        source = model_path or name
        self.source = source
        self.tokenizer = AutoTokenizer.from_pretrained(source)
        self.model = AutoModel.from_pretrained(source, attn_implementation="eager")
        self.model.eval()
        cfg = self.model.config
        self.name = name
        self.layers = cfg.num_hidden_layers
        self.heads = cfg.num_attention_heads
        self.hidden = cfg.hidden_size
        self.max_subtokens = getattr(cfg, "max_position_embeddings", 512)
        self.fingerprint = hashlib.sha256(source.encode()).hexdigest()[:16]

    def encode(self, words, layers):
        batch = self.tokenizer(words, is_split_into_words=True, return_tensors="pt")
        with self.torch.no_grad():
            out = self.model(**batch, output_attentions=True, output_hidden_states=True)
        word_ids = batch.word_ids()
        spans = []
        for w in range(len(words)):
            idx = [i for i, x in enumerate(word_ids) if x == w]
            if not idx:
                raise ValueError(f"word {w} has no subtokens")
            spans.append([idx[0], idx[-1] + 1])
        special = [i for i, x in enumerate(word_ids) if x is None]
        attention = [out.attentions[l][0].double().tolist() for l in layers]
        return {
            "n_subtokens": len(word_ids),
            "word_spans": spans,
            "special": special,
            "attention": attention,
            "hidden": out.last_hidden_state[0].double().tolist(),
        }

    def adapt(self, documents, config, run_dir):
        from transformers import (
            AutoModelForMaskedLM,
            DataCollatorForLanguageModeling,
            Trainer,
            TrainingArguments,
        )
        model = AutoModelForMaskedLM.from_pretrained(self.source)
        data = [self.tokenizer(d, truncation=True) for d in documents]
        collator = DataCollatorForLanguageModeling(self.tokenizer, mlm_probability=config["mask_probability"])
        args = TrainingArguments(
            output_dir=run_dir,
            per_device_train_batch_size=config["batch_size"],
            gradient_accumulation_steps=config["grad_accum_steps"],
            learning_rate=config["learning_rate"],
            num_train_epochs=config["epochs"],
            seed=config["seed"],
            logging_strategy="epoch",
            save_strategy="no",
            report_to=[],
        )
        trainer = Trainer(model=model, args=args, train_dataset=data, data_collator=collator)
        trainer.train()
        losses = [h["loss"] for h in trainer.state.log_history if "loss" in h]
        model_path = os.path.join(run_dir, "model")
        trainer.save_model(model_path)
        self.tokenizer.save_pretrained(model_path)
        return {"losses": losses, "model_path": model_path}


def serve(model):
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
            op = req.get("op")
            if op == "info":
                reply = {
                    "name": model.name,
                    "layers": model.layers,
                    "heads": model.heads,
                    "hidden": model.hidden,
                    "d_k": model.hidden // model.heads,
                    "max_subtokens": model.max_subtokens,
                    "fingerprint": model.fingerprint,
                }
            elif op == "encode":
                reply = model.encode(req["words"], req.get("layers", []))
            elif op == "adapt":
                reply = model.adapt(req["documents"], req["config"], req["run_dir"])
            else:
                reply = {"error": f"unknown op {op!r}"}
        except Exception as exc:  # reported to the caller, not fatal
            reply = {"error": f"{type(exc).__name__}: {exc}"}
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--model", default="bert-base-uncased")
    parser.add_argument("--stub", action="store_true")
    args = parser.parse_args()
    model_path = os.environ.get("ABSA_BRIDGE_MODEL")
    model = Stub(model_path) if args.stub else Transformers(args.model, model_path)
    serve(model)


if __name__ == "__main__":
    main()
