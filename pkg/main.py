from src.ood_lab.cli import app

if __name__ == "__main__":
    app()
