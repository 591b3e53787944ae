from kconc.main import main

main()
