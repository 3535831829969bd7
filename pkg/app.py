from pathlib import Path
import sys

project_root = Path(__file__).resolve().parent
sys.path.append(str(project_root))

import gradio as gr

from src.inference import generate_forecast_from_files
from src.utils.log_setup import configure_logging


demo = gr.Interface(
    fn=generate_forecast_from_files,
    inputs=[
        gr.File(
            file_count="single",
            label="Upload a traffic movie (.gcmv)",
            file_types=[".gcmv"],
            type="binary",
        ),
        gr.File(
            file_count="multiple",
            label="Upload one or more checkpoints (.gckp); several are averaged",
            file_types=[".gckp"],
            type="binary",
        ),
        gr.Number(value=0, precision=0, minimum=0, label="Window"),
        gr.Slider(minimum=0, maximum=11, step=1, value=0, label="Predicted frame"),
        gr.Checkbox(value=True, label="Apply the road mask of the movie"),
    ],
    outputs=[
        gr.Image(label="Predicted (left) vs. true (right) traffic volume", type="pil"),
        gr.Textbox(label="Window MSE (0-255 scale)"),
    ],
)


if __name__ == "__main__":
    configure_logging("INFO")
    demo.launch()
