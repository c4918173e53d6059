from tofsim.main import main

main()
