void noise(int n, int A[const restrict static n])
{
  for (int i = 0; i < n; i++)
    A[i] = A[i] + rand() % 10;
}
